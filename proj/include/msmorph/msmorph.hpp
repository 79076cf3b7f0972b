#pragma once

#include "msmorph/error.hpp"
#include "msmorph/features.hpp"
#include "msmorph/metrics.hpp"
#include "msmorph/mvol.hpp"
#include "msmorph/nifti.hpp"
#include "msmorph/phantom.hpp"
#include "msmorph/registration.hpp"
#include "msmorph/similarity.hpp"
#include "msmorph/volume.hpp"
#include "msmorph/warp.hpp"
