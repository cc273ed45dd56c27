#pragma once

#include "awsrn/analysis.hpp"
#include "awsrn/autodiff.hpp"
#include "awsrn/checkpoint.hpp"
#include "awsrn/errors.hpp"
#include "awsrn/evaluate.hpp"
#include "awsrn/image.hpp"
#include "awsrn/metrics.hpp"
#include "awsrn/model.hpp"
#include "awsrn/run_config.hpp"
#include "awsrn/sampler.hpp"
#include "awsrn/tensor.hpp"
#include "awsrn/train.hpp"
