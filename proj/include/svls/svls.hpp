#pragma once

#include "svls/calib_metrics.hpp"
#include "svls/error.hpp"
#include "svls/io.hpp"
#include "svls/kernel.hpp"
#include "svls/loss.hpp"
#include "svls/parallel.hpp"
#include "svls/phantom.hpp"
#include "svls/seg_metrics.hpp"
#include "svls/softlabel.hpp"
#include "svls/volume.hpp"
