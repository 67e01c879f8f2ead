/*
 * Copyright 2026 The Excursion Authors
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

#include "excursion/capacity2.hpp"
#include "excursion/capacityk.hpp"
#include "excursion/covariance.hpp"
#include "excursion/gauss.hpp"
#include "excursion/geometry.hpp"
#include "excursion/moments.hpp"
#include "excursion/montecarlo.hpp"
#include "excursion/numeric.hpp"
#include "excursion/parallel.hpp"
#include "excursion/quadrature.hpp"
#include "excursion/random.hpp"
#include "excursion/version.hpp"
