#pragma once

#include "uniasr/corpus.hpp"
#include "uniasr/engine.hpp"
#include "uniasr/error.hpp"
#include "uniasr/harness.hpp"
#include "uniasr/kv_cache.hpp"
#include "uniasr/layout.hpp"
#include "uniasr/metrics.hpp"
#include "uniasr/model.hpp"
#include "uniasr/oracles.hpp"
#include "uniasr/rng.hpp"
#include "uniasr/text.hpp"
#include "uniasr/tokens.hpp"
#include "uniasr/toy_transformer.hpp"
#include "uniasr/verify.hpp"

namespace uniasr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace uniasr
