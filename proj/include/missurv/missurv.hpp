#pragma once

#include "missurv/error.hpp"
#include "missurv/survival_data.hpp"
#include "missurv/curves.hpp"
#include "missurv/cox_engine.hpp"
#include "missurv/hazard_one_sample.hpp"
#include "missurv/hazard_cox.hpp"
#include "missurv/type2_missing.hpp"
#include "missurv/simulation.hpp"
#include "missurv/io.hpp"
