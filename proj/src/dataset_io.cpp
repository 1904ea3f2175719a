#include "gateaux/dataset_io.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gateaux {

namespace {

std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_double(const std::string& cell, const std::string& where)
{
    if (cell.empty()) throw InvalidInput(where + ": empty field");
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v))
        throw InvalidInput(where + ": cannot parse '" + cell + "' as a number");
    return v;
}

int parse_int(const std::string& cell, const std::string& where)
{
    const double v = parse_double(cell, where);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw InvalidInput(where + ": '" + cell + "' is not an integer");
    return static_cast<int>(v);
}

bool next_data_line(std::istream& in, std::string& line, std::size_t& lineno)
{
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
}

std::ifstream open_input(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot open '" + path + "'");
    return f;
}

}  // namespace

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

Dataset read_dataset_csv(std::istream& in, const std::string& source)
{
    std::string line;
    std::size_t lineno = 0;
    if (!next_data_line(in, line, lineno)) throw InvalidInput(source + ": empty file");
    const auto header = split_line(line);

    enum class Col { X, A, Y };
    std::vector<Col> kinds;
    std::vector<std::size_t> stage_dims;
    std::size_t pending = 0;
    bool seen_y = false;
    for (const auto& name : header) {
        if (seen_y) throw InvalidInput(source + ": outcome column y must be last");
        if (name == "y") {
            kinds.push_back(Col::Y);
            seen_y = true;
        } else if (!name.empty() && name[0] == 'a') {
            kinds.push_back(Col::A);
            stage_dims.push_back(pending);
            pending = 0;
        } else if (!name.empty()) {
            kinds.push_back(Col::X);
            ++pending;
        } else {
            throw InvalidInput(source + ": empty column name in header");
        }
    }
    if (!seen_y || stage_dims.empty() || pending != 0)
        throw InvalidInput(source + ": header must look like x1,...,xd,a,y (one a column per stage, y last)");
    for (std::size_t d : stage_dims)
        if (d == 0 || d != stage_dims.front()) throw InvalidInput(source + ": every stage needs the same number of covariates");

    Dataset data;
    data.layout = {stage_dims.size(), stage_dims.front()};
    while (next_data_line(in, line, lineno)) {
        const auto cells = split_line(line);
        const std::string where = source + ":" + std::to_string(lineno);
        if (cells.size() != kinds.size())
            throw InvalidInput(where + ": expected " + std::to_string(kinds.size()) + " fields, found " +
                               std::to_string(cells.size()));
        Observation o;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            switch (kinds[c]) {
            case Col::X: o.x.push_back(parse_double(cells[c], where)); break;
            case Col::A: o.a.push_back(parse_int(cells[c], where)); break;
            case Col::Y: o.y = parse_double(cells[c], where); break;
            }
        }
        data.rows.push_back(std::move(o));
    }
    if (data.empty()) throw InvalidInput(source + ": no data rows");
    return data;
}

Dataset read_dataset_csv(const std::string& path)
{
    auto f = open_input(path);
    return read_dataset_csv(f, path);
}

void write_dataset_csv(std::ostream& out, const Dataset& data)
{
    const Layout l = data.layout;
    for (std::size_t t = 0; t < l.stages; ++t) {
        for (std::size_t j = 0; j < l.covariate_dim; ++j) {
            out << 'x';
            if (l.stages > 1) out << t << '_';
            out << j + 1 << ',';
        }
        out << 'a';
        if (l.stages > 1) out << t;
        out << ',';
    }
    out << "y\n";
    for (const auto& r : data.rows) {
        for (std::size_t t = 0; t < l.stages; ++t) {
            for (std::size_t j = 0; j < l.covariate_dim; ++j) out << format_double(r.x[t * l.covariate_dim + j]) << ',';
            out << r.a[t] << ',';
        }
        out << format_double(r.y) << '\n';
    }
}

void write_dataset_csv(const std::string& path, const Dataset& data)
{
    std::ofstream f(path);
    if (!f) throw InvalidInput("cannot write '" + path + "'");
    write_dataset_csv(f, data);
}

std::vector<Triple> read_triples_csv(std::istream& in, const std::string& source)
{
    std::string line;
    std::size_t lineno = 0;
    if (!next_data_line(in, line, lineno)) throw InvalidInput(source + ": empty file");
    const auto header = split_line(line);
    if (header != std::vector<std::string>{"s", "a", "s_next"})
        throw InvalidInput(source + ": header must be s,a,s_next");
    std::vector<Triple> out;
    while (next_data_line(in, line, lineno)) {
        const auto cells = split_line(line);
        const std::string where = source + ":" + std::to_string(lineno);
        if (cells.size() != 3) throw InvalidInput(where + ": expected 3 fields");
        out.push_back({parse_int(cells[0], where), parse_int(cells[1], where), parse_int(cells[2], where)});
    }
    if (out.empty()) throw InvalidInput(source + ": no triples");
    return out;
}

std::vector<Triple> read_triples_csv(const std::string& path)
{
    auto f = open_input(path);
    return read_triples_csv(f, path);
}

void write_triples_csv(std::ostream& out, const std::vector<Triple>& triples)
{
    out << "s,a,s_next\n";
    for (const auto& t : triples) out << t.s << ',' << t.a << ',' << t.s_next << '\n';
}

}  // namespace gateaux
