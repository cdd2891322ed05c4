#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "synex/store.hpp"
#include "synex/types.hpp"

namespace synex {

// A scored vocabulary snapshot. p_set is the set expansion probability; sy and
// final are filled once the synonym model has adjusted the list. Entries stay
// sorted by the active score (final when present, else p_set) descending, with
// ties broken by ascending term id.
struct RankEntry {
    TermId id = 0;
    double p_set = 0.0;
    std::optional<double> sy;
    std::optional<double> final_score;

    double active_score() const { return final_score ? *final_score : p_set; }
};

struct RankList {
    std::vector<RankEntry> entries;
    std::size_t unscored_terms = 0; // vocabulary terms omitted for missing vectors

    void sort() {
        std::sort(entries.begin(), entries.end(), [](const RankEntry& a, const RankEntry& b) {
            if (a.active_score() != b.active_score()) return a.active_score() > b.active_score();
            return a.id < b.id;
        });
    }

    const RankEntry* find(TermId id) const {
        for (const auto& e : entries)
            if (e.id == id) return &e;
        return nullptr;
    }
};

// TSV export: `rank<TAB>surface<TAB>p_set[<TAB>sy<TAB>final]`.
inline void write_rank_list(const std::filesystem::path& path, const RankList& list,
                            const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    char buf[96];
    std::size_t rank = 1;
    for (const auto& e : list.entries) {
        if (e.sy) {
            std::snprintf(buf, sizeof(buf), "\t%.17g\t%.17g\t%.17g", e.p_set, *e.sy,
                          *e.final_score);
        } else {
            std::snprintf(buf, sizeof(buf), "\t%.17g", e.p_set);
        }
        out << rank++ << '\t' << vocab.surface(e.id) << buf << '\n';
    }
}

} // namespace synex
