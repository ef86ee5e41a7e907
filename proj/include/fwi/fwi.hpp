#pragma once

#include "fwi/error.hpp"
#include "fwi/mesh.hpp"
#include "fwi/quadrature.hpp"
#include "fwi/fem.hpp"
#include "fwi/scenario.hpp"
#include "fwi/forward.hpp"
#include "fwi/inverse.hpp"
#include "fwi/verify.hpp"
