#pragma once

#include "tdcp/driver.hpp"
#include "tdcp/errors.hpp"
#include "tdcp/lobatto.hpp"
#include "tdcp/mesh.hpp"
#include "tdcp/numerics.hpp"
#include "tdcp/potential.hpp"
#include "tdcp/propagator.hpp"
#include "tdcp/quadrature.hpp"
#include "tdcp/reference.hpp"
#include "tdcp/sector.hpp"
#include "tdcp/specfun.hpp"
#include "tdcp/stationary.hpp"
