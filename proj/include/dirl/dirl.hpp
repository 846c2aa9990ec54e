#pragma once

// Umbrella header for the whole toolkit.

#include "dirl/attention.hpp"
#include "dirl/checkpoint.hpp"
#include "dirl/config.hpp"
#include "dirl/core_types.hpp"
#include "dirl/datagen.hpp"
#include "dirl/decoder.hpp"
#include "dirl/encoder.hpp"
#include "dirl/fusion.hpp"
#include "dirl/harness.hpp"
#include "dirl/image_io.hpp"
#include "dirl/losses.hpp"
#include "dirl/metrics.hpp"
#include "dirl/network.hpp"
