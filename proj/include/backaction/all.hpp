#pragma once

#include "backaction/adler.hpp"
#include "backaction/arnold_tongue.hpp"
#include "backaction/backaction.hpp"
#include "backaction/config.hpp"
#include "backaction/fft.hpp"
#include "backaction/linewidth.hpp"
#include "backaction/lock.hpp"
#include "backaction/lorentzian.hpp"
#include "backaction/parallel.hpp"
#include "backaction/random.hpp"
#include "backaction/scenarios.hpp"
#include "backaction/simulate.hpp"
#include "backaction/spectrum.hpp"
#include "backaction/system_params.hpp"
#include "backaction/trajectory.hpp"
#include "backaction/units.hpp"
