#pragma once

#include "pmon/core.hpp"
#include "pmon/scenario.hpp"
#include "pmon/sensing.hpp"
#include "pmon/riccati.hpp"
#include "pmon/steady_sensitivity.hpp"
#include "pmon/trajectory_1d.hpp"
#include "pmon/trajectory_fourier.hpp"
#include "pmon/optimizer.hpp"
#include "pmon/kalman_bucy.hpp"
#include "pmon/policy_1d.hpp"
#include "pmon/mtsp.hpp"
#include "pmon/initializer.hpp"
#include "pmon/io.hpp"
