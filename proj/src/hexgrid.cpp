#include "tseb/hexgrid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "tseb/errors.hpp"

namespace tseb {

namespace {

constexpr double kPi = 3.14159265358979323846;

// The six axial neighbor offsets in clockwise order starting from +q.
constexpr int kNeighborOffsets[6][2] = {{1, 0}, {0, 1}, {-1, 1}, {-1, 0}, {0, -1}, {1, -1}};

// Planar angle of an axial offset, mapped to [0, 2*pi) so that the six
// neighbor directions sort in clockwise-rank order.
double offset_angle(int dq, int dr) {
    double x = dq + 0.5 * dr;
    double y = dr * std::sqrt(3.0) / 2.0;
    double a = std::atan2(y, x);
    if (a < 0.0) a += 2.0 * kPi;
    return a;
}

// floor(log7(x)) for integer x >= 1, exact.
int log7_floor(long long x) {
    int levels = 0;
    while (x >= 7) {
        x /= 7;
        ++levels;
    }
    return levels;
}

int raw_resolution(int diameter) {
    int radius = (diameter + 1) / 2;
    long long covered = 1 + 3LL * radius * (radius + 1);
    return kFinestResolution - log7_floor(covered);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

bool parse_int(const std::string& s, long long& out) {
    size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return false;
    size_t e = s.find_last_not_of(" \t");
    auto res = std::from_chars(s.data() + b, s.data() + e + 1, out);
    return res.ec == std::errc() && res.ptr == s.data() + e + 1;
}

}  // namespace

int hex_distance(const HexCell& a, const HexCell& b) {
    if (a.resolution != b.resolution)
        throw DataError("hex distance undefined across resolutions");
    int dq = a.q - b.q;
    int dr = a.r - b.r;
    return (std::abs(dq) + std::abs(dr) + std::abs(dq + dr)) / 2;
}

int clockwise_rank(const HexCell& center, const HexCell& neighbor) {
    if (hex_distance(center, neighbor) != 1)
        throw DataError("clockwise rank defined only for adjacent cells");
    int dq = neighbor.q - center.q;
    int dr = neighbor.r - center.r;
    for (int k = 0; k < 6; ++k)
        if (kNeighborOffsets[k][0] == dq && kNeighborOffsets[k][1] == dr) return k;
    throw DataError("clockwise rank defined only for adjacent cells");
}

GridInventory GridInventory::from_cells(std::map<HexCell, std::int64_t> cells) {
    GridInventory inv;
    inv.cells = std::move(cells);
    int resolution = -1;
    for (const auto& [cell, volume] : inv.cells) {
        if (volume < 0) throw DataError("negative order volume in grid inventory");
        if (resolution < 0) resolution = cell.resolution;
        if (cell.resolution != resolution)
            throw DataError("mixed resolutions in grid inventory");
        inv.total_orders += volume;
    }
    return inv;
}

int effective_resolution_for_diameter(int diameter) {
    if (diameter < 0) throw DataError("negative diameter");
    return std::clamp(raw_resolution(diameter), kCoarsestResolution, kFinestResolution);
}

FlexiblePartition flexible_partition(const GridInventory& inv, double threshold_fraction,
                                     std::uint64_t seed) {
    if (inv.cells.empty()) throw DataError("empty grid inventory");
    if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0))
        throw ConfigError("threshold fraction must be in (0, 1)");
    if (inv.total_orders <= 0) throw DataError("grid inventory has no order volume");

    double target = threshold_fraction * static_cast<double>(inv.total_orders);
    double slack = 1e-9 * std::max(1.0, target);

    // Seed order: volume descending, then axial coordinates ascending.
    std::vector<std::pair<HexCell, std::int64_t>> order(inv.cells.begin(), inv.cells.end());
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    std::mt19937_64 rng(seed);
    FlexiblePartition part;

    for (const auto& [seed_cell, seed_volume] : order) {
        if (part.assignment.count(seed_cell)) continue;

        FlexibleGrid grid;
        grid.member_cells.push_back(seed_cell);
        grid.aggregate_volume = seed_volume;
        int grid_index = static_cast<int>(part.grids.size());
        part.assignment[seed_cell] = grid_index;

        // Hex distance from each unaggregated cell to the nearest member.
        std::map<HexCell, int> min_dist;
        for (const auto& [cell, volume] : inv.cells) {
            (void)volume;
            if (!part.assignment.count(cell)) min_dist[cell] = hex_distance(cell, seed_cell);
        }

        int diameter = 0;
        while (static_cast<double>(grid.aggregate_volume) + slack < target) {
            // Adjacent candidates keep the grid connected; rank them by
            // clockwise angle around the seed, then volume, then a seeded
            // random draw.
            const HexCell* best = nullptr;
            double best_angle = 0.0;
            std::int64_t best_volume = 0;
            std::vector<const HexCell*> tied;
            for (const auto& [cell, dist] : min_dist) {
                if (dist != 1) continue;
                double angle = offset_angle(cell.q - seed_cell.q, cell.r - seed_cell.r);
                std::int64_t volume = inv.cells.at(cell);
                if (!best || angle < best_angle ||
                    (angle == best_angle && volume > best_volume)) {
                    best = &cell;
                    best_angle = angle;
                    best_volume = volume;
                    tied.assign(1, &cell);
                } else if (angle == best_angle && volume == best_volume) {
                    tied.push_back(&cell);
                }
            }
            if (!best) break;
            if (tied.size() > 1) {
                std::uniform_int_distribution<size_t> pick(0, tied.size() - 1);
                best = tied[pick(rng)];
            }

            // Growing past the coarsest footprint stops the grid instead.
            int new_diameter = diameter;
            for (const HexCell& member : grid.member_cells)
                new_diameter = std::max(new_diameter, hex_distance(*best, member));
            if (raw_resolution(new_diameter) < kCoarsestResolution) break;

            HexCell merged = *best;
            diameter = new_diameter;
            grid.member_cells.push_back(merged);
            grid.aggregate_volume += inv.cells.at(merged);
            part.assignment[merged] = grid_index;
            min_dist.erase(merged);
            for (auto& [cell, dist] : min_dist)
                dist = std::min(dist, hex_distance(cell, merged));
        }

        grid.under_threshold = static_cast<double>(grid.aggregate_volume) + slack < target;
        grid.effective_resolution = effective_resolution_for_diameter(diameter);
        std::sort(grid.member_cells.begin(), grid.member_cells.end());
        part.grids.push_back(std::move(grid));
    }
    return part;
}

PartitionValidation validate_partition(const FlexiblePartition& part, const GridInventory& inv,
                                       double threshold_fraction) {
    PartitionValidation v;
    double target = threshold_fraction * static_cast<double>(inv.total_orders);
    double slack = 1e-9 * std::max(1.0, target);

    std::map<HexCell, int> seen;
    for (size_t g = 0; g < part.grids.size(); ++g) {
        const FlexibleGrid& grid = part.grids[g];
        char buf[128];
        if (grid.member_cells.empty()) {
            std::snprintf(buf, sizeof(buf), "grid %zu is empty", g);
            v.violations.push_back(buf);
            continue;
        }
        for (const HexCell& cell : grid.member_cells) {
            if (!inv.cells.count(cell)) {
                std::snprintf(buf, sizeof(buf), "grid %zu contains cell (%d,%d) not in inventory",
                              g, cell.q, cell.r);
                v.violations.push_back(buf);
            }
            auto [it, inserted] = seen.emplace(cell, static_cast<int>(g));
            if (!inserted) {
                std::snprintf(buf, sizeof(buf), "cell (%d,%d) assigned to grids %d and %zu",
                              cell.q, cell.r, it->second, g);
                v.violations.push_back(buf);
            }
        }

        // Connectivity over distance-1 adjacency.
        std::set<HexCell> members(grid.member_cells.begin(), grid.member_cells.end());
        std::set<HexCell> reached;
        std::vector<HexCell> frontier{grid.member_cells.front()};
        reached.insert(grid.member_cells.front());
        while (!frontier.empty()) {
            HexCell cur = frontier.back();
            frontier.pop_back();
            for (const auto& off : kNeighborOffsets) {
                HexCell nb{cur.q + off[0], cur.r + off[1], cur.resolution};
                if (members.count(nb) && !reached.count(nb)) {
                    reached.insert(nb);
                    frontier.push_back(nb);
                }
            }
        }
        if (reached.size() != members.size()) {
            std::snprintf(buf, sizeof(buf), "grid %zu is disconnected", g);
            v.violations.push_back(buf);
        }

        std::int64_t volume = 0;
        for (const HexCell& cell : grid.member_cells) {
            auto it = inv.cells.find(cell);
            if (it != inv.cells.end()) volume += it->second;
        }
        bool reaches = static_cast<double>(volume) + slack >= target;
        if (!reaches && !grid.under_threshold) {
            std::snprintf(buf, sizeof(buf), "grid %zu is below threshold and not flagged", g);
            v.violations.push_back(buf);
        }

        int diameter = 0;
        for (size_t i = 0; i < grid.member_cells.size(); ++i)
            for (size_t j = i + 1; j < grid.member_cells.size(); ++j)
                diameter =
                    std::max(diameter, hex_distance(grid.member_cells[i], grid.member_cells[j]));
        if (raw_resolution(diameter) < kCoarsestResolution) {
            std::snprintf(buf, sizeof(buf), "grid %zu spans past the coarsest resolution", g);
            v.violations.push_back(buf);
        }
        if (grid.effective_resolution != effective_resolution_for_diameter(diameter)) {
            std::snprintf(buf, sizeof(buf), "grid %zu records wrong effective resolution", g);
            v.violations.push_back(buf);
        }
    }

    for (const auto& [cell, volume] : inv.cells) {
        (void)volume;
        if (!seen.count(cell)) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "cell (%d,%d) not covered by any grid", cell.q,
                          cell.r);
            v.violations.push_back(buf);
        }
    }

    for (const auto& [cell, g] : part.assignment) {
        auto it = seen.find(cell);
        if (it == seen.end() || it->second != g) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "assignment of cell (%d,%d) disagrees with grid %d",
                          cell.q, cell.r, g);
            v.violations.push_back(buf);
        }
    }
    return v;
}

GridInventory load_inventory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') continue;
        header = split_line(line);
        break;
    }
    if (header.empty()) throw DataError("empty inventory file: " + path);

    int q_col = -1, r_col = -1, vol_col = -1;
    for (size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "q") q_col = static_cast<int>(i);
        else if (header[i] == "r") r_col = static_cast<int>(i);
        else if (header[i] == "volume") vol_col = static_cast<int>(i);
    }
    if (q_col < 0 || r_col < 0 || vol_col < 0)
        throw DataError("inventory file needs q, r and volume columns: " + path);

    std::map<HexCell, std::int64_t> cells;
    size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        ++row;
        std::vector<std::string> fields = split_line(line);
        if (fields.size() != header.size()) {
            std::ostringstream msg;
            msg << "row " << row << ": expected " << header.size() << " fields, got "
                << fields.size();
            throw DataError(msg.str());
        }
        long long q = 0, r = 0, volume = 0;
        if (!parse_int(fields[q_col], q) || !parse_int(fields[r_col], r) ||
            !parse_int(fields[vol_col], volume)) {
            std::ostringstream msg;
            msg << "row " << row << ": non-integer cell record";
            throw DataError(msg.str());
        }
        HexCell cell{static_cast<int>(q), static_cast<int>(r), kFinestResolution};
        if (!cells.emplace(cell, volume).second) {
            std::ostringstream msg;
            msg << "row " << row << ": duplicate cell (" << q << "," << r << ")";
            throw DataError(msg.str());
        }
    }
    return GridInventory::from_cells(std::move(cells));
}

void save_partition(const FlexiblePartition& part, const std::string& path,
                    const std::string& comment) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    if (!comment.empty()) out << "# " << comment << "\n";
    out << "q,r,grid_id,grid_volume,effective_resolution,under_threshold\n";
    for (size_t g = 0; g < part.grids.size(); ++g) {
        const FlexibleGrid& grid = part.grids[g];
        for (const HexCell& cell : grid.member_cells) {
            out << cell.q << "," << cell.r << "," << g << "," << grid.aggregate_volume << ","
                << grid.effective_resolution << "," << (grid.under_threshold ? 1 : 0) << "\n";
        }
    }
    if (!out) throw DataError("failed writing file: " + path);
}

}  // namespace tseb
