#pragma once

// Batch files: a header naming the observed columns in schema order
// (x1..xp[,z1..zq][,w1..wr]) followed by y, then one observation per line.

#include <istream>
#include <string>

#include "hetstream/batch_stats.hpp"

namespace hetstream::cli {

// Throws FormatError naming the source and line of the first bad row.
RawBatch read_batch_csv(std::istream& in, const StreamSchema& schema,
                        const std::string& source = "<input>");
RawBatch read_batch_file(const std::string& path, const StreamSchema& schema);

// Number of leading x columns named in the header of `path`.
int count_x_columns(const std::string& path);

void write_batch_csv(std::ostream& out, const RawBatch& batch, const StreamSchema& schema);

}  // namespace hetstream::cli
