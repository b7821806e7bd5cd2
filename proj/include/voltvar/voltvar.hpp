#pragma once

#define VOLTVAR_VERSION "0.1.0"

#include "voltvar/circuit.hpp"
#include "voltvar/dispatch.hpp"
#include "voltvar/errors.hpp"
#include "voltvar/experiments.hpp"
#include "voltvar/io.hpp"
#include "voltvar/powerflow.hpp"
#include "voltvar/qp.hpp"
#include "voltvar/random.hpp"
