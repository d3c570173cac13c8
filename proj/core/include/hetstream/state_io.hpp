#pragma once

// Versioned snapshot of an AccumulatorState. The format is line-oriented
// text; reals are written as hexadecimal floating point so a round trip is
// bit-exact.
//
//   hetstream-state 1
//   schema <p> <q> <r>
//   names <name>...
//   config <convention> <pivot_tolerance> <frozen|refined>
//   phase <0|1|2> case <uncorrelated|correlated>
//   counts <batches> <k> <m>
//   segment <phase> <n> <yty> <d> <gram d*d row-major> <cross d>    (x3)
//   weights <0|1> [...]
//   homog <0|1> [<b_hat> <estimated_on> <refined> <second_refined> ...]
//   sse <sse> <quad> <valid>
//   fit <0|1> [<d> <values>]
//   end

#include <iosfwd>
#include <string>

#include "hetstream/stream_engine.hpp"

namespace hetstream {

inline constexpr int kStateFormatVersion = 1;

void save_state(const AccumulatorState& state, std::ostream& out);
// Throws FormatError on malformed or unsupported input.
AccumulatorState load_state(std::istream& in);

void save_state_file(const AccumulatorState& state, const std::string& path);
AccumulatorState load_state_file(const std::string& path);

}  // namespace hetstream
