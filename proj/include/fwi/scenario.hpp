#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "fwi/error.hpp"
#include "fwi/fem.hpp"

namespace fwi {

/// Separable source contribution f(t, x) = pulse(t) * spatial(x). When
/// `integral` (the antiderivative of pulse vanishing at 0) is given it is used
/// exactly; otherwise the time integral is taken by composite Simpson.
struct SourceTerm {
    std::function<double(const Point&)> spatial;
    std::function<double(double)> pulse;
    std::function<double(double)> integral;
};

/// Observation data p_ob(t, x) given in closed form.
using ObservationFunction = std::function<double(double, const Point&)>;

/// Observation data sampled at the time midpoints t_{l+1/2}, one nodal vector
/// per step; only valid for the mesh and step count it was produced on.
using SampledObservations = std::vector<NodalVector>;

/// Receiver weight a(t, x) = window(t) * weight(x); the spatial part enters
/// the discrete problem through its cell averages.
struct Receiver {
    std::function<double(const Point&)> weight;
    std::function<double(double)> window = [](double) { return 1.0; };
    std::variant<ObservationFunction, SampledObservations> observation =
        ObservationFunction([](double, const Point&) { return 0.0; });
    /// Average the spatial weight with a subdivision rule (for indicator-like weights).
    bool discontinuous_weight = false;
};

/// Complete problem data, independent of any particular mesh.
struct Scenario {
    double T = 1.0;
    std::function<double(const Point&)> eta = [](const Point&) { return 0.0; };
    std::vector<SourceTerm> sources;
    ScalarFunction p0 = ScalarFunction::zero();
    ScalarFunction p1 = ScalarFunction::zero();
    std::vector<Receiver> receivers;
    double lambda = 0.0;
    double nu_lo = 1.0;
    double nu_hi = 1.0;

    void validate() const {
        if (!(T > 0)) throw PreconditionError("scenario: final time T must be positive");
        if (!(nu_lo > 0) || !(nu_lo <= nu_hi)) {
            throw PreconditionError("scenario: bounds must satisfy 0 < nu_lo <= nu_hi");
        }
        if (!(lambda >= 0)) throw PreconditionError("scenario: lambda must be nonnegative");
        if (!p0.value || !p1.value || !eta) throw PreconditionError("scenario: missing initial data or damping");
        for (const auto& s : sources) {
            if (!s.spatial || !s.pulse) throw PreconditionError("scenario: incomplete source term");
        }
        for (const auto& r : receivers) {
            if (!r.weight || !r.window) throw PreconditionError("scenario: incomplete receiver");
        }
    }
};

/// Piecewise-constant parameter constrained to [lo, hi] on every triangle.
class ParamField {
public:
    ParamField(DG0Field values, double lo, double hi) : values_(std::move(values)), lo_(lo), hi_(hi) {
        if (!(lo <= hi)) throw PreconditionError("ParamField: lo must not exceed hi");
        for (std::size_t t = 0; t < values_.size(); ++t) {
            if (!(values_[t] >= lo_ && values_[t] <= hi_)) {
                throw PreconditionError("ParamField: value " + std::to_string(values_[t]) + " on triangle " +
                                        std::to_string(t) + " outside [" + std::to_string(lo_) + ", " +
                                        std::to_string(hi_) + "]");
            }
        }
    }

    static ParamField constant(std::size_t n, double value, double lo, double hi) {
        return ParamField(DG0Field::constant(n, value), lo, hi);
    }

    const DG0Field& values() const noexcept { return values_; }
    double operator[](std::size_t t) const { return values_[t]; }
    std::size_t size() const noexcept { return values_.size(); }
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }

private:
    DG0Field values_;
    double lo_;
    double hi_;
};

/// Elementwise clamp onto [lo, hi].
inline ParamField project_box(const DG0Field& nu, double lo, double hi) {
    if (!(lo <= hi)) throw PreconditionError("project_box: lo must not exceed hi");
    DG0Field out = nu;
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = std::clamp(out[t], lo, hi);
    return ParamField(std::move(out), lo, hi);
}

/// Values W(t_{l+1/2}), l = 0..N-1, of the antiderivative of `pulse`, by
/// composite Simpson on panels of width tau/2 (sub-intervals tau/4).
inline std::vector<double> midpoint_integrals(const std::function<double(double)>& pulse, double tau, std::size_t n) {
    std::vector<double> out(n);
    auto panel = [&](double a, double b) { return (b - a) / 6.0 * (pulse(a) + 4.0 * pulse(0.5 * (a + b)) + pulse(b)); };
    double acc = panel(0.0, 0.5 * tau);
    for (std::size_t l = 0; l < n; ++l) {
        if (l > 0) {
            const double a = (double(l) - 0.5) * tau;
            acc += panel(a, a + 0.5 * tau) + panel(a + 0.5 * tau, a + tau);
        }
        out[l] = acc;
    }
    return out;
}

}  // namespace fwi
