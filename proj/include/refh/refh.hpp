#pragma once

#include "refh/rng.hpp"
#include "refh/exp_family.hpp"
#include "refh/harmonium.hpp"
#include "refh/schedule.hpp"
#include "refh/temporal.hpp"
#include "refh/circular.hpp"
#include "refh/worldgen.hpp"
#include "refh/baselines.hpp"
#include "refh/eval.hpp"
