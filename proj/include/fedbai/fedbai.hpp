// fedbai.hpp
#pragma once
#include "algorithms.hpp"
#include "env.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "instance.hpp"
#include "rng.hpp"
#include "se.hpp"
#include "theory.hpp"
#include "union_find.hpp"
