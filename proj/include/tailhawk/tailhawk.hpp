#pragma once

#include "tailhawk/backtest.hpp"
#include "tailhawk/data.hpp"
#include "tailhawk/distributions.hpp"
#include "tailhawk/error.hpp"
#include "tailhawk/estimation.hpp"
#include "tailhawk/forecast.hpp"
#include "tailhawk/garch.hpp"
#include "tailhawk/hawkes.hpp"
#include "tailhawk/io.hpp"
#include "tailhawk/optim.hpp"
#include "tailhawk/piecewise.hpp"
#include "tailhawk/rng.hpp"
#include "tailhawk/simulate.hpp"
