#pragma once

#include "labcat/acquisition.hpp"
#include "labcat/bench.hpp"
#include "labcat/bounds.hpp"
#include "labcat/doe.hpp"
#include "labcat/errors.hpp"
#include "labcat/external_objective.hpp"
#include "labcat/gp.hpp"
#include "labcat/optimizer.hpp"
#include "labcat/selftest.hpp"
#include "labcat/test_functions.hpp"
#include "labcat/transform.hpp"
