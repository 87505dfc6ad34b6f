#pragma once

// Federated rule-ensemble models: privacy-preserving shared cutoffs, local
// GBDT rule generation, and l1-regularized coefficient estimation via
// federated dual averaging.

#include "fedrule/data.hpp"
#include "fedrule/dp_hist.hpp"
#include "fedrule/errors.hpp"
#include "fedrule/fedda.hpp"
#include "fedrule/featurize.hpp"
#include "fedrule/harness.hpp"
#include "fedrule/interpret.hpp"
#include "fedrule/metrics.hpp"
#include "fedrule/model.hpp"
#include "fedrule/pipeline.hpp"
#include "fedrule/random.hpp"
#include "fedrule/rulegen.hpp"
#include "fedrule/synth.hpp"

namespace fedrule {
constexpr const char* kVersion = "0.1.0";
}
