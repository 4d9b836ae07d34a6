#pragma once

#include "hetmf/error.hpp"
#include "hetmf/model.hpp"
#include "hetmf/model_io.hpp"
#include "hetmf/dynamics.hpp"
#include "hetmf/ode.hpp"
#include "hetmf/meanfield.hpp"
#include "hetmf/lyapunov.hpp"
#include "hetmf/refined.hpp"
#include "hetmf/rng.hpp"
#include "hetmf/simulator.hpp"
#include "hetmf/oracle.hpp"
#include "hetmf/cache.hpp"
#include "hetmf/loadbalance.hpp"
