#include "jdlab/record.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace jdlab {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_double(const Record::Entry& e, std::string_view token) {
    const std::string s = trim(token);
    if (s.empty()) throw RecordError("empty numeric value for '" + e.key + "'", e.line, e.key);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE)
        throw RecordError("'" + s + "' is not a number (field '" + e.key + "')", e.line, e.key);
    return v;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

Record Record::parse(std::string_view text) {
    Record rec;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        ++line_no;
        pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw RecordError("expected 'key = value', got '" + stripped + "'", line_no, "");
        std::string key = trim(std::string_view(stripped).substr(0, eq));
        std::string value = trim(std::string_view(stripped).substr(eq + 1));
        if (key.empty()) throw RecordError("empty key", line_no, "");
        if (rec.has(key)) throw RecordError("duplicate key '" + key + "'", line_no, key);
        rec.entries_.push_back({std::move(key), std::move(value), line_no});
    }
    return rec;
}

Record Record::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RecordError("cannot open '" + path + "'", 0, "");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void Record::set(const std::string& key, const std::string& value) {
    for (auto& e : entries_) {
        if (e.key == key) {
            e.value = value;
            return;
        }
    }
    entries_.push_back({key, value, 0});
}

void Record::set(const std::string& key, double value) { set(key, format_double(value)); }

void Record::set(const std::string& key, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) s += ", ";
        s += format_double(values[i]);
    }
    set(key, s);
}

bool Record::has(const std::string& key) const { return find(key) != nullptr; }

const Record::Entry* Record::find(const std::string& key) const {
    for (const auto& e : entries_)
        if (e.key == key) return &e;
    return nullptr;
}

std::string Record::get_string(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw RecordError("missing field '" + key + "'", 0, key);
    return e->value;
}

std::string Record::get_string(const std::string& key, const std::string& fallback) const {
    const Entry* e = find(key);
    return e ? e->value : fallback;
}

double Record::get_double(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw RecordError("missing field '" + key + "'", 0, key);
    return parse_double(*e, e->value);
}

double Record::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

std::int64_t Record::get_int(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw RecordError("missing field '" + key + "'", 0, key);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(e->value.c_str(), &end, 10);
    if (e->value.empty() || *end != '\0' || errno == ERANGE)
        throw RecordError("'" + e->value + "' is not an integer (field '" + key + "')", e->line, key);
    return v;
}

std::int64_t Record::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t Record::get_u64(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw RecordError("missing field '" + key + "'", 0, key);
    char* end = nullptr;
    errno = 0;
    if (e->value.empty() || e->value[0] == '-')
        throw RecordError("'" + e->value + "' is not an unsigned integer (field '" + key + "')", e->line, key);
    const unsigned long long v = std::strtoull(e->value.c_str(), &end, 10);
    if (*end != '\0' || errno == ERANGE)
        throw RecordError("'" + e->value + "' is not an unsigned integer (field '" + key + "')", e->line, key);
    return v;
}

std::vector<double> Record::get_list(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) throw RecordError("missing field '" + key + "'", 0, key);
    std::vector<double> out;
    std::string_view v = e->value;
    std::size_t pos = 0;
    while (pos <= v.size()) {
        const auto comma = v.find(',', pos);
        const auto token = v.substr(pos, comma == std::string_view::npos ? v.npos : comma - pos);
        if (!trim(token).empty() || comma != std::string_view::npos) out.push_back(parse_double(*e, token));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

Record Record::sub(const std::string& prefix) const {
    Record out;
    for (const auto& e : entries_)
        if (e.key.size() > prefix.size() && e.key.compare(0, prefix.size(), prefix) == 0)
            out.entries_.push_back({e.key.substr(prefix.size()), e.value, e.line});
    return out;
}

void Record::merge(const Record& other, const std::string& prefix) {
    for (const auto& e : other.entries_) set(prefix + e.key, e.value);
}

std::string Record::to_text() const {
    std::string out;
    for (const auto& e : entries_) out += e.key + " = " + e.value + "\n";
    return out;
}

}  // namespace jdlab
