#pragma once

#include "mnvc/arith_coder.hpp"
#include "mnvc/bytes.hpp"
#include "mnvc/codec.hpp"
#include "mnvc/codec_config.hpp"
#include "mnvc/complexity.hpp"
#include "mnvc/container.hpp"
#include "mnvc/entropy_model.hpp"
#include "mnvc/error.hpp"
#include "mnvc/metrics.hpp"
#include "mnvc/model_weights.hpp"
#include "mnvc/parallel.hpp"
#include "mnvc/partition.hpp"
#include "mnvc/pipeline.hpp"
#include "mnvc/qtensor.hpp"
#include "mnvc/video_io.hpp"
