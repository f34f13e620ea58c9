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

#include <stdexcept>
#include <string>

namespace peersel {

// Raised when a review budget or selection quota cannot be met. `agent` is
// the offending reviewer or cluster id, or -1 when no single one is to blame.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(const std::string& what, int agent = -1)
      : std::runtime_error(what), agent_(agent) {}
  int agent() const noexcept { return agent_; }

 private:
  int agent_;
};

}  // namespace peersel
