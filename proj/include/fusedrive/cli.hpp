// Copyright 2026 The fusedrive Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <ostream>

#include "fusedrive/error.hpp"

namespace fusedrive {

// Process exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;      // bad flags, config, missing inputs
inline constexpr int kExitData = 3;       // invalid samples, labels, shapes
inline constexpr int kExitFormat = 4;     // corrupt bundle/checkpoint/manifest files
inline constexpr int kExitTransport = 5;  // chat endpoint unreachable
inline constexpr int kExitParse = 6;      // unparseable chat answers

int ExitCodeFor(ErrorKind kind);

// Entry point shared by the executable and the tests.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fusedrive
