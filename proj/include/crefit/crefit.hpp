#pragma once

// Linear regression with two crossed random effects, fit in O(N) by
// alternating shrinkage updates: method-of-moments variance components,
// backfitted generalized least squares, level-effect prediction, and the
// update-matrix norm diagnostics that govern convergence.

#include "crefit/errors.hpp"
#include "crefit/rng.hpp"
#include "crefit/csv.hpp"
#include "crefit/table.hpp"
#include "crefit/moments.hpp"
#include "crefit/smoother.hpp"
#include "crefit/backfit.hpp"
#include "crefit/gls.hpp"
#include "crefit/dense.hpp"
#include "crefit/update_matrix.hpp"
#include "crefit/sampling.hpp"
#include "crefit/experiments.hpp"
