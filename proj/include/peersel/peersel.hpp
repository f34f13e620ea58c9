/*
Copyright 2026 The peersel Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include "peersel/assign.hpp"
#include "peersel/errors.hpp"
#include "peersel/harness.hpp"
#include "peersel/mechanisms.hpp"
#include "peersel/metrics.hpp"
#include "peersel/noise.hpp"
#include "peersel/random.hpp"
#include "peersel/theory.hpp"
#include "peersel/twostage.hpp"
