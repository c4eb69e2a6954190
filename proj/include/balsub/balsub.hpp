/*
 * Copyright 2026 The balsub Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "balsub/anova.hpp"
#include "balsub/criterion.hpp"
#include "balsub/csv.hpp"
#include "balsub/dataset.hpp"
#include "balsub/evaluate.hpp"
#include "balsub/random.hpp"
#include "balsub/report.hpp"
#include "balsub/selector.hpp"
