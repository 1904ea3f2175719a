#pragma once

// CSV input/output for observation datasets and MDP transition triples.

#include "gateaux/measures.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace gateaux {

/// Columns named a* are treatments, the column named y is the outcome and
/// every other column is a covariate. Covariates preceding a treatment column
/// belong to that stage, so `x1,x2,a,y` is one stage with d = 2 and
/// `x0,a0,x1,a1,y` is two stages with d = 1.
Dataset read_dataset_csv(std::istream& in, const std::string& source = "<stream>");
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(std::ostream& out, const Dataset& data);
void write_dataset_csv(const std::string& path, const Dataset& data);

struct Triple {
    int s = 0;
    int a = 0;
    int s_next = 0;
    friend bool operator==(const Triple&, const Triple&) = default;
};

/// Header `s,a,s_next`; integer entries.
std::vector<Triple> read_triples_csv(std::istream& in, const std::string& source = "<stream>");
std::vector<Triple> read_triples_csv(const std::string& path);
void write_triples_csv(std::ostream& out, const std::vector<Triple>& triples);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace gateaux
