#pragma once

#include "cavkit/common.hpp"
#include "cavkit/cqed.hpp"
#include "cavkit/dynamics.hpp"
#include "cavkit/flyingcat.hpp"
#include "cavkit/metrology.hpp"
#include "cavkit/ode.hpp"
#include "cavkit/qcore.hpp"
#include "cavkit/quad.hpp"
#include "cavkit/rng.hpp"
#include "cavkit/special.hpp"
#include "cavkit/spectroscopy.hpp"
#include "cavkit/stabnet.hpp"
#include "cavkit/timebin.hpp"
