/*
 * Copyright 2026 The hetfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "hetfed/cli.hpp"
#include "hetfed/config.hpp"
#include "hetfed/curriculum.hpp"
#include "hetfed/data.hpp"
#include "hetfed/error.hpp"
#include "hetfed/federation.hpp"
#include "hetfed/matrix.hpp"
#include "hetfed/metrics.hpp"
#include "hetfed/model.hpp"
#include "hetfed/persistence.hpp"
#include "hetfed/rng.hpp"
#include "hetfed/trainer.hpp"
