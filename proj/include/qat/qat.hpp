/* Copyright 2026 The qat-tradeoff Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include "qat/calibration.hpp"
#include "qat/costmodel.hpp"
#include "qat/kernels.hpp"
#include "qat/model.hpp"
#include "qat/ops.hpp"
#include "qat/optim.hpp"
#include "qat/pareto.hpp"
#include "qat/quantcore.hpp"
#include "qat/runner/checkpoint.hpp"
#include "qat/runner/config.hpp"
#include "qat/runner/dataset.hpp"
#include "qat/runner/results.hpp"
#include "qat/runner/sweep.hpp"
#include "qat/runner/train.hpp"
#include "qat/tape.hpp"
#include "qat/tensor.hpp"
