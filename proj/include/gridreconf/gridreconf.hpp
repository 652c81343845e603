#pragma once

#include "gridreconf/errors.hpp"
#include "gridreconf/network.hpp"
#include "gridreconf/feeders.hpp"
#include "gridreconf/power_flow.hpp"
#include "gridreconf/optimizer.hpp"
#include "gridreconf/format.hpp"
#include "gridreconf/network_io.hpp"
#include "gridreconf/csv.hpp"
#include "gridreconf/parallel.hpp"
#include "gridreconf/dataset.hpp"
#include "gridreconf/response_parser.hpp"
#include "gridreconf/loss_evaluator.hpp"
#include "gridreconf/eval_harness.hpp"
#include "gridreconf/endpoint.hpp"
