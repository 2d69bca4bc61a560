#pragma once

#include "analysis.hpp"
#include "core_model.hpp"
#include "oracles.hpp"
#include "parallel.hpp"
#include "quadrature.hpp"
#include "rng.hpp"
#include "schemes.hpp"
