#pragma once

#include "lichnerowicz/core.hpp"
#include "lichnerowicz/diagnostics.hpp"
#include "lichnerowicz/errors.hpp"
#include "lichnerowicz/krylov.hpp"
#include "lichnerowicz/minimal_branch.hpp"
#include "lichnerowicz/mountain_pass.hpp"
#include "lichnerowicz/newton.hpp"
#include "lichnerowicz/torus_grid.hpp"
