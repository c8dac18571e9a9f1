/*
 * Copyright 2026 The fadeq Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "fadeq/correction.hpp"
#include "fadeq/error.hpp"
#include "fadeq/graph.hpp"
#include "fadeq/graph_io.hpp"
#include "fadeq/hessian.hpp"
#include "fadeq/pipeline.hpp"
#include "fadeq/quant.hpp"
#include "fadeq/report.hpp"
#include "fadeq/solver.hpp"
#include "fadeq/store.hpp"
#include "fadeq/synth.hpp"
