#pragma once

#include "scout/calibrator.hpp"
#include "scout/config.hpp"
#include "scout/diagnostics.hpp"
#include "scout/environment.hpp"
#include "scout/errors.hpp"
#include "scout/estimator.hpp"
#include "scout/harness.hpp"
#include "scout/numerics.hpp"
#include "scout/policies.hpp"
#include "scout/report.hpp"
#include "scout/rng.hpp"
