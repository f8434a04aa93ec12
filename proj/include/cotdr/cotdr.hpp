#pragma once

// Convenience umbrella: pull in the whole toolkit with one include.
#include "cotdr/burst.hpp"
#include "cotdr/channel.hpp"
#include "cotdr/config.hpp"
#include "cotdr/constants.hpp"
#include "cotdr/correlate.hpp"
#include "cotdr/errors.hpp"
#include "cotdr/fft.hpp"
#include "cotdr/ingest.hpp"
#include "cotdr/measure.hpp"
#include "cotdr/peaks.hpp"
#include "cotdr/prbs.hpp"
#include "cotdr/rng.hpp"
#include "cotdr/series.hpp"
#include "cotdr/svg.hpp"
#include "cotdr/thermal.hpp"
#include "cotdr/waveform.hpp"
