#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tseb {

// Axial-coordinate hexagonal cell. Resolution 10 is the finest level; 4 is the
// coarsest any aggregate may reach.
struct HexCell {
    int q = 0;
    int r = 0;
    int resolution = 10;

    friend bool operator<(const HexCell& a, const HexCell& b) {
        if (a.resolution != b.resolution) return a.resolution < b.resolution;
        if (a.q != b.q) return a.q < b.q;
        return a.r < b.r;
    }
    friend bool operator==(const HexCell& a, const HexCell& b) = default;
};

inline constexpr int kFinestResolution = 10;
inline constexpr int kCoarsestResolution = 4;

// Axial hex distance (|dq| + |dr| + |dq+dr|) / 2. Throws DataError on
// mismatched resolutions.
int hex_distance(const HexCell& a, const HexCell& b);

// Rank 0..5 of the six adjacent directions, clockwise starting from +q.
// Throws DataError for non-adjacent cells.
int clockwise_rank(const HexCell& center, const HexCell& neighbor);

// Per-cell monthly order volume.
struct GridInventory {
    std::map<HexCell, std::int64_t> cells;
    std::int64_t total_orders = 0;

    static GridInventory from_cells(std::map<HexCell, std::int64_t> cells);
};

// A connected group of cells aggregated until its volume clears the threshold
// (or growth was exhausted, in which case it is flagged).
struct FlexibleGrid {
    std::vector<HexCell> member_cells;  // sorted
    std::int64_t aggregate_volume = 0;
    int effective_resolution = kFinestResolution;
    bool under_threshold = false;
};

struct FlexiblePartition {
    std::vector<FlexibleGrid> grids;
    std::map<HexCell, int> assignment;  // cell -> index into grids
};

// Coarsest level whose footprint a set of hex-metric diameter `diameter`
// spans, via the ~7x cells-per-level ratio. Clamped to [4, 10].
int effective_resolution_for_diameter(int diameter);

// Greedy aggregation: seeds in descending volume order grow by repeatedly
// merging the nearest unaggregated cell (ties: clockwise from +q around the
// seed, then larger volume, then seeded random) until the grid holds at least
// threshold_fraction of total orders. Merges that would disconnect the grid
// or push it past the coarsest resolution stop growth; grids stuck under the
// threshold are flagged, never force-merged.
FlexiblePartition flexible_partition(const GridInventory& inv, double threshold_fraction,
                                     std::uint64_t seed);

struct PartitionValidation {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

// Checks disjointness, coverage, per-grid connectivity, threshold satisfaction
// and the resolution bound. Empty violation list = valid.
PartitionValidation validate_partition(const FlexiblePartition& part, const GridInventory& inv,
                                       double threshold_fraction);

// CSV with columns q,r,volume. Lines starting with '#' are skipped.
GridInventory load_inventory(const std::string& path);

// CSV with columns q,r,grid_id.
void save_partition(const FlexiblePartition& part, const std::string& path,
                    const std::string& comment = {});

}  // namespace tseb
