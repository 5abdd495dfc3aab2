// SPDX-License-Identifier: Apache-2.0
#include "hopformer/flops.hpp"

namespace hopformer {
namespace {
thread_local ScopedFlopMeter* active_meter = nullptr;
}

ScopedFlopMeter::ScopedFlopMeter() : previous_(active_meter) { active_meter = this; }

ScopedFlopMeter::~ScopedFlopMeter() { active_meter = previous_; }

void count_dense_flops(std::uint64_t n) {
  if (active_meter) active_meter->tally_.dense += n;
}

void count_attention_flops(std::uint64_t n) {
  if (active_meter) active_meter->tally_.attention += n;
}

}  // namespace hopformer
