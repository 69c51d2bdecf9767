#pragma once

#include "lyapnet/errors.hpp"
#include "lyapnet/rng.hpp"
#include "lyapnet/parallel.hpp"
#include "lyapnet/dynsys.hpp"
#include "lyapnet/integrate.hpp"
#include "lyapnet/lyapunov.hpp"
#include "lyapnet/pipeline.hpp"
#include "lyapnet/binary_io.hpp"
#include "lyapnet/dataset_io.hpp"
#include "lyapnet/cnn.hpp"
#include "lyapnet/model_io.hpp"
#include "lyapnet/sweep.hpp"
