#pragma once

#include "setforge/beam.hpp"
#include "setforge/common.hpp"
#include "setforge/config.hpp"
#include "setforge/dataset.hpp"
#include "setforge/expr.hpp"
#include "setforge/imaging.hpp"
#include "setforge/metrics.hpp"
#include "setforge/net.hpp"
#include "setforge/sha256.hpp"
#include "setforge/symbols.hpp"
#include "setforge/transformer.hpp"
#include "setforge/vocab.hpp"
