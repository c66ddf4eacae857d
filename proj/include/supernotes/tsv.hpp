#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace supernotes {

// Minimal reader for header-row TSV files. Rows with a column count different
// from the header are reported to the caller instead of throwing, so ingest
// can count and skip them.
class TsvReader {
public:
    explicit TsvReader(const std::string& path) : in_(path), path_(path) {
        if (!in_) throw std::runtime_error("cannot open TSV file: " + path);
        std::string header;
        if (!std::getline(in_, header)) {
            throw std::runtime_error("empty TSV file (missing header): " + path);
        }
        strip_cr(header);
        columns_ = split(header);
        for (std::size_t i = 0; i < columns_.size(); ++i) index_[columns_[i]] = i;
    }

    bool has_column(const std::string& name) const { return index_.count(name) > 0; }

    std::size_t column(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw std::runtime_error("missing required column '" + name + "' in " + path_);
        }
        return it->second;
    }

    const std::vector<std::string>& columns() const { return columns_; }

    // Returns false at EOF. *malformed is set when the row's field count does
    // not match the header; the row content is still returned.
    bool next(std::vector<std::string>& fields, bool* malformed) {
        std::string line;
        if (!std::getline(in_, line)) return false;
        strip_cr(line);
        fields = split(line);
        *malformed = fields.size() != columns_.size();
        return true;
    }

private:
    static void strip_cr(std::string& s) {
        if (!s.empty() && s.back() == '\r') s.pop_back();
    }

    static std::vector<std::string> split(const std::string& line) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            if (tab == std::string::npos) {
                out.push_back(line.substr(start));
                break;
            }
            out.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        return out;
    }

    std::ifstream in_;
    std::string path_;
    std::vector<std::string> columns_;
    std::unordered_map<std::string, std::size_t> index_;
};

class TsvWriter {
public:
    TsvWriter(const std::string& path, const std::vector<std::string>& columns)
        : out_(path), n_cols_(columns.size()) {
        if (!out_) throw std::runtime_error("cannot open TSV file for writing: " + path);
        write_row(columns);
    }

    void write_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << '\t';
            out_ << fields[i];
        }
        out_ << '\n';
    }

    std::size_t n_cols() const { return n_cols_; }

private:
    std::ofstream out_;
    std::size_t n_cols_;
};

}  // namespace supernotes
