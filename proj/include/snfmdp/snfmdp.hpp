#pragma once

#include "snfmdp/estimate.hpp"
#include "snfmdp/instance_io.hpp"
#include "snfmdp/model.hpp"
#include "snfmdp/policies.hpp"
#include "snfmdp/results_io.hpp"
#include "snfmdp/scenario.hpp"
#include "snfmdp/simulate.hpp"
#include "snfmdp/solve.hpp"
#include "snfmdp/version.hpp"
