#pragma once

#include "feedsim/cascade.hpp"
#include "feedsim/core.hpp"
#include "feedsim/engine.hpp"
#include "feedsim/gpc.hpp"
#include "feedsim/identification.hpp"
#include "feedsim/io.hpp"
#include "feedsim/plant.hpp"
#include "feedsim/trajectory.hpp"
