#pragma once

// Temporal knowledge graph core: quadruples, datasets on disk and the
// indexed fact store that serves every history lookup.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace onsep {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;
using Timestamp = std::int64_t;

inline constexpr Timestamp kEndOfTime = std::numeric_limits<Timestamp>::max();

struct Quadruple {
    EntityId subject = 0;
    RelationId relation = 0;
    EntityId object = 0;
    Timestamp t = 0;

    friend bool operator==(const Quadruple&, const Quadruple&) = default;
};

/// Chronologically ordered events of one subject.
using EventChain = std::vector<Quadruple>;

struct Dataset {
    std::vector<std::string> entity_names;    // index = entity id
    std::vector<std::string> relation_names;  // index = relation id
    std::vector<Quadruple> train;
    std::vector<Quadruple> valid;
    std::vector<Quadruple> test;
    Timestamp interval = 1;
    bool inverse_augmented = false;

    std::size_t entity_count() const { return entity_names.size(); }
    std::size_t relation_count() const { return relation_names.size(); }

    /// Relation count before inverse augmentation.
    std::size_t raw_relation_count() const {
        return inverse_augmented ? relation_names.size() / 2 : relation_names.size();
    }
};

/// Reads entity2id.txt, relation2id.txt and the three split files.
Dataset load_dataset(const std::filesystem::path& dir);

/// Writes the dataset in the same layout load_dataset reads.
void write_dataset(const Dataset& d, const std::filesystem::path& dir);

/// GCD of the gaps between distinct timestamps of all splits; 1 when fewer
/// than two distinct timestamps exist.
Timestamp infer_interval(const Dataset& d);

/// Mirrors every (s, r, o, t) as (o, r + R, s, t) so subject queries become
/// object queries. Each mirror directly follows its source fact.
Dataset add_inverse_relations(Dataset d);

inline Quadruple mirror(const Quadruple& q, std::size_t raw_relations) {
    return {q.object, static_cast<RelationId>(q.relation + raw_relations), q.subject, q.t};
}

/// Append-only multiset of facts, indexed by subject and by timestamp.
/// One writer; concurrent readers are safe while no insert is running.
class TkgStore {
public:
    /// Invoked with every fact returned by history_for_subject.
    using AccessGuard = std::function<void(const Quadruple&)>;

    TkgStore() = default;

    void insert(const Quadruple& q);
    void insert(const std::vector<Quadruple>& qs);

    /// All facts of `subject` with t < before, ascending by t, ties in
    /// insertion order.
    EventChain history_for_subject(EntityId subject, Timestamp before = kEndOfTime) const;

    /// Facts with timestamp exactly t, insertion order.
    std::vector<Quadruple> facts_at(Timestamp t) const;

    const std::vector<Quadruple>& facts() const { return facts_; }
    std::size_t size() const { return facts_.size(); }

    std::vector<EntityId> subjects() const;

    void set_access_guard(AccessGuard guard) { guard_ = std::move(guard); }

private:
    std::vector<Quadruple> facts_;
    std::unordered_map<EntityId, std::vector<std::size_t>> by_subject_;
    std::map<Timestamp, std::vector<std::size_t>> by_time_;
    AccessGuard guard_;
};

}  // namespace onsep
