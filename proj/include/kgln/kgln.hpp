/*
 * Copyright 2026 The KGLN Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Umbrella header.

#pragma once

#include "kgln/checkpoint.hpp"
#include "kgln/config.hpp"
#include "kgln/dataset_io.hpp"
#include "kgln/errors.hpp"
#include "kgln/experiments.hpp"
#include "kgln/graph.hpp"
#include "kgln/ingest.hpp"
#include "kgln/metrics.hpp"
#include "kgln/model.hpp"
#include "kgln/random.hpp"
#include "kgln/synthetic.hpp"
#include "kgln/tensor.hpp"
#include "kgln/text.hpp"
#include "kgln/training.hpp"
#include "kgln/transe.hpp"
