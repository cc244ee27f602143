#pragma once

#include "miafdr/attack.hpp"
#include "miafdr/conformal.hpp"
#include "miafdr/dataset.hpp"
#include "miafdr/error.hpp"
#include "miafdr/experiments.hpp"
#include "miafdr/fdr.hpp"
#include "miafdr/metrics.hpp"
#include "miafdr/mlp.hpp"
#include "miafdr/pvalues.hpp"
#include "miafdr/rng.hpp"
#include "miafdr/score_io.hpp"
#include "miafdr/simulation.hpp"
