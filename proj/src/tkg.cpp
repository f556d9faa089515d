#include "onsep/tkg.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <string_view>
#include <unordered_set>

#include "onsep/errors.hpp"

namespace onsep {
namespace fs = std::filesystem;

namespace {

std::ifstream open_or_throw(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError("cannot open dataset file " + path.string());
    }
    return in;
}

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
    if (text.empty()) return false;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        cols.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cols;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

// `<name>\t<id>` per line, ids dense from 0. Names may contain spaces, so
// the id is taken after the last tab.
std::vector<std::string> read_names(const fs::path& path) {
    auto in = open_or_throw(path);
    const std::string source = path.filename().string();
    std::vector<std::pair<std::uint32_t, std::string>> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) continue;
        auto tab = line.rfind('\t');
        if (tab == std::string::npos) {
            throw ParseError(source, lineno, "expected <name>\\t<id>");
        }
        std::uint32_t id = 0;
        if (!parse_int(std::string_view(line).substr(tab + 1), id)) {
            throw ParseError(source, lineno, "invalid id");
        }
        entries.emplace_back(id, line.substr(0, tab));
    }

    std::vector<std::string> names(entries.size());
    std::vector<bool> seen(entries.size(), false);
    std::unordered_set<std::string> unique;
    for (auto& [id, name] : entries) {
        if (id >= names.size() || seen[id]) {
            throw IntegrityError(source + ": ids are not dense from 0 (id " + std::to_string(id) + ")");
        }
        if (!unique.insert(name).second) {
            throw IntegrityError(source + ": duplicate name '" + name + "'");
        }
        seen[id] = true;
        names[id] = std::move(name);
    }
    return names;
}

std::vector<Quadruple> read_facts(const fs::path& path, std::size_t entities, std::size_t relations) {
    auto in = open_or_throw(path);
    const std::string source = path.filename().string();
    std::vector<Quadruple> facts;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        if (cols.size() < 4) {
            throw ParseError(source, lineno, "expected at least 4 tab-separated columns");
        }
        Quadruple q;
        if (!parse_int(cols[0], q.subject) || !parse_int(cols[1], q.relation) ||
            !parse_int(cols[2], q.object) || !parse_int(cols[3], q.t) || q.t < 0) {
            throw ParseError(source, lineno, "invalid integer field");
        }
        if (q.subject >= entities || q.object >= entities) {
            throw IntegrityError(source + ":" + std::to_string(lineno) + ": entity id out of range");
        }
        if (q.relation >= relations) {
            throw IntegrityError(source + ":" + std::to_string(lineno) + ": relation id out of range");
        }
        facts.push_back(q);
    }
    return facts;
}

std::pair<Timestamp, Timestamp> time_range(const std::vector<Quadruple>& facts) {
    auto [lo, hi] = std::minmax_element(facts.begin(), facts.end(),
                                        [](const Quadruple& a, const Quadruple& b) { return a.t < b.t; });
    return {lo->t, hi->t};
}

void check_split_order(const Dataset& d) {
    const std::vector<const std::vector<Quadruple>*> splits{&d.train, &d.valid, &d.test};
    const char* names[] = {"train", "valid", "test"};
    std::optional<Timestamp> prev_max;
    const char* prev_name = nullptr;
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i]->empty()) continue;
        auto [lo, hi] = time_range(*splits[i]);
        if (prev_max && lo <= *prev_max) {
            throw IntegrityError(std::string(names[i]) + " timestamps overlap " + prev_name + " timestamps");
        }
        prev_max = hi;
        prev_name = names[i];
    }
}

void write_names(const std::vector<std::string>& names, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    for (std::size_t i = 0; i < names.size(); ++i) {
        out << names[i] << '\t' << i << '\n';
    }
}

void write_facts(const std::vector<Quadruple>& facts, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    for (const auto& q : facts) {
        out << q.subject << '\t' << q.relation << '\t' << q.object << '\t' << q.t << '\n';
    }
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
    Dataset d;
    d.entity_names = read_names(dir / "entity2id.txt");
    d.relation_names = read_names(dir / "relation2id.txt");
    d.train = read_facts(dir / "train.txt", d.entity_count(), d.relation_count());
    d.valid = read_facts(dir / "valid.txt", d.entity_count(), d.relation_count());
    d.test = read_facts(dir / "test.txt", d.entity_count(), d.relation_count());
    check_split_order(d);
    d.interval = infer_interval(d);
    return d;
}

void write_dataset(const Dataset& d, const fs::path& dir) {
    fs::create_directories(dir);
    write_names(d.entity_names, dir / "entity2id.txt");
    write_names(d.relation_names, dir / "relation2id.txt");
    write_facts(d.train, dir / "train.txt");
    write_facts(d.valid, dir / "valid.txt");
    write_facts(d.test, dir / "test.txt");
}

Timestamp infer_interval(const Dataset& d) {
    std::set<Timestamp> stamps;
    for (const auto* split : {&d.train, &d.valid, &d.test}) {
        for (const auto& q : *split) stamps.insert(q.t);
    }
    Timestamp g = 0;
    for (auto it = stamps.begin(); it != stamps.end() && std::next(it) != stamps.end(); ++it) {
        g = std::gcd(g, *std::next(it) - *it);
    }
    return g == 0 ? 1 : g;
}

Dataset add_inverse_relations(Dataset d) {
    if (d.inverse_augmented) {
        throw StateError("dataset is already inverse-augmented");
    }
    const std::size_t raw = d.relation_names.size();
    d.relation_names.reserve(2 * raw);
    for (std::size_t r = 0; r < raw; ++r) {
        d.relation_names.push_back("inv_" + d.relation_names[r]);
    }
    for (auto* split : {&d.train, &d.valid, &d.test}) {
        std::vector<Quadruple> out;
        out.reserve(2 * split->size());
        for (const auto& q : *split) {
            out.push_back(q);
            out.push_back(mirror(q, raw));
        }
        *split = std::move(out);
    }
    d.inverse_augmented = true;
    return d;
}

void TkgStore::insert(const Quadruple& q) {
    const std::size_t idx = facts_.size();
    facts_.push_back(q);

    auto& chain = by_subject_[q.subject];
    // Stable: a fact lands after every stored fact with t <= q.t.
    auto pos = std::upper_bound(chain.begin(), chain.end(), q.t,
                                [this](Timestamp t, std::size_t i) { return t < facts_[i].t; });
    chain.insert(pos, idx);

    by_time_[q.t].push_back(idx);
}

void TkgStore::insert(const std::vector<Quadruple>& qs) {
    facts_.reserve(facts_.size() + qs.size());
    for (const auto& q : qs) insert(q);
}

EventChain TkgStore::history_for_subject(EntityId subject, Timestamp before) const {
    EventChain out;
    auto it = by_subject_.find(subject);
    if (it == by_subject_.end()) return out;
    const auto& chain = it->second;
    auto end = std::lower_bound(chain.begin(), chain.end(), before,
                                [this](std::size_t i, Timestamp t) { return facts_[i].t < t; });
    out.reserve(static_cast<std::size_t>(end - chain.begin()));
    for (auto i = chain.begin(); i != end; ++i) {
        out.push_back(facts_[*i]);
        if (guard_) guard_(out.back());
    }
    return out;
}

std::vector<Quadruple> TkgStore::facts_at(Timestamp t) const {
    std::vector<Quadruple> out;
    auto it = by_time_.find(t);
    if (it == by_time_.end()) return out;
    out.reserve(it->second.size());
    for (auto i : it->second) out.push_back(facts_[i]);
    return out;
}

std::vector<EntityId> TkgStore::subjects() const {
    std::vector<EntityId> out;
    out.reserve(by_subject_.size());
    for (const auto& [s, _] : by_subject_) out.push_back(s);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace onsep
