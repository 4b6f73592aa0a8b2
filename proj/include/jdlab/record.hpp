#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace jdlab {

/// Parse failure with the offending line (1-based, 0 when not tied to a line) and field.
class RecordError : public std::runtime_error {
public:
    RecordError(const std::string& message, int line, std::string field)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
          line_(line), field_(std::move(field)) {}
    int line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    int line_;
    std::string field_;
};

/// Flat, line-oriented `key = value` text. `#` starts a comment; blank lines are ignored.
/// Keys are unique. Order of insertion is preserved so that serialization is stable.
class Record {
public:
    struct Entry {
        std::string key;
        std::string value;
        int line = 0;
    };

    static Record parse(std::string_view text);
    static Record load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, const std::vector<double>& values);

    bool has(const std::string& key) const;
    const Entry* find(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::vector<double> get_list(const std::string& key) const;

    /// Entries whose key starts with `prefix`, with the prefix stripped.
    Record sub(const std::string& prefix) const;
    /// Copy entries of `other` under `prefix`.
    void merge(const Record& other, const std::string& prefix = "");

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::string to_text() const;

private:
    std::vector<Entry> entries_;
};

/// Shortest round-tripping decimal (17 significant digits).
std::string format_double(double value);

}  // namespace jdlab
