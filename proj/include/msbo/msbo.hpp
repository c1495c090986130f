#pragma once

#include "msbo/acquisition.hpp"
#include "msbo/bench.hpp"
#include "msbo/cascade.hpp"
#include "msbo/dataset.hpp"
#include "msbo/drivers.hpp"
#include "msbo/gp.hpp"
#include "msbo/inventory.hpp"
#include "msbo/mlp.hpp"
#include "msbo/optimize.hpp"
#include "msbo/random.hpp"
#include "msbo/sobol.hpp"
#include "msbo/synthetic.hpp"
