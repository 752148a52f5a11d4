#pragma once

#include "adalab/analysis.hpp"
#include "adalab/certification.hpp"
#include "adalab/compensated.hpp"
#include "adalab/config.hpp"
#include "adalab/errors.hpp"
#include "adalab/experiment.hpp"
#include "adalab/objectives.hpp"
#include "adalab/optimizers.hpp"
#include "adalab/oracles.hpp"
#include "adalab/report.hpp"
#include "adalab/rng.hpp"
#include "adalab/telemetry.hpp"
#include "adalab/vector.hpp"
