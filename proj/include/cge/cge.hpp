// Copyright 2026 The CGE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header.

#pragma once

#include "cge/common.hpp"
#include "cge/community.hpp"
#include "cge/config.hpp"
#include "cge/eval.hpp"
#include "cge/gnn.hpp"
#include "cge/graph.hpp"
#include "cge/mapping.hpp"
#include "cge/serialize.hpp"
#include "cge/synthetic.hpp"
#include "cge/unlearning.hpp"
