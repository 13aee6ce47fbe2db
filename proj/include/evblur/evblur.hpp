#ifndef EVBLUR_EVBLUR_HPP
#define EVBLUR_EVBLUR_HPP

#include "evblur/attention.hpp"
#include "evblur/core.hpp"
#include "evblur/edi.hpp"
#include "evblur/io.hpp"
#include "evblur/metrics.hpp"
#include "evblur/pipeline.hpp"
#include "evblur/represent.hpp"
#include "evblur/simulate.hpp"

#endif  // EVBLUR_EVBLUR_HPP
