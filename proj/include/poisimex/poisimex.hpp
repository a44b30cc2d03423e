#pragma once

// Convenience umbrella for the whole library.

#include "poisimex/csv.hpp"
#include "poisimex/errors.hpp"
#include "poisimex/format.hpp"
#include "poisimex/generate.hpp"
#include "poisimex/linalg.hpp"
#include "poisimex/ols.hpp"
#include "poisimex/rng.hpp"
#include "poisimex/sampling.hpp"
#include "poisimex/simex.hpp"
#include "poisimex/study.hpp"
#include "poisimex/study_json.hpp"
#include "poisimex/svg.hpp"
#include "poisimex/types.hpp"
