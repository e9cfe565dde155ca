#pragma once

#include "satt/errors.hpp"
#include "satt/tensor.hpp"
#include "satt/autodiff.hpp"
#include "satt/optim.hpp"
#include "satt/kernels.hpp"
#include "satt/attention.hpp"
#include "satt/data.hpp"
#include "satt/metrics.hpp"
#include "satt/model.hpp"
#include "satt/train.hpp"
#include "satt/config.hpp"
#include "satt/io.hpp"
