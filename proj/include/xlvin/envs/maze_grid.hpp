#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace xlvin::envs {

struct Cell {
    int row = 0;
    int col = 0;
    auto operator<=>(const Cell&) const = default;
};

// The eight principal directions, clockwise from north. Index = action id.
inline constexpr std::array<Cell, 8> kMoves = {{{-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};
inline constexpr std::size_t kMazeActions = kMoves.size();

struct MazeGrid {
    std::size_t size = 0;
    std::vector<std::uint8_t> obstacles;  // row-major, 1 = obstacle
    Cell start;
    Cell goal;
    int difficulty = 0;  // 8-connected shortest path length start -> goal
    std::uint64_t seed = 0;

    bool in_bounds(Cell c) const {
        return c.row >= 0 && c.col >= 0 && c.row < static_cast<int>(size) && c.col < static_cast<int>(size);
    }
    bool blocked(Cell c) const { return obstacles[static_cast<std::size_t>(c.row) * size + c.col] != 0; }
    bool free(Cell c) const { return in_bounds(c) && !blocked(c); }
    std::size_t index(Cell c) const { return static_cast<std::size_t>(c.row) * size + c.col; }

    bool operator==(const MazeGrid&) const = default;
};

// 8-connected BFS distances from `from` to every cell; -1 marks unreachable
// cells and obstacles. Diagonal moves between two diagonal walls are allowed.
std::vector<int> bfs_distances(const MazeGrid& maze, Cell from);

// One shortest action sequence start -> goal (empty if unreachable).
std::vector<std::size_t> shortest_path_actions(const MazeGrid& maze);

// Checks the MazeGrid invariants, difficulty included. Throws ContractViolation.
void validate(const MazeGrid& maze);

// JSON-lines record: size, obstacle bitmask (row-major '0'/'1' string), start,
// goal, difficulty, seed.
nlohmann::json to_json(const MazeGrid& maze);
MazeGrid maze_from_json(const nlohmann::json& j);

std::string ascii(const MazeGrid& maze, Cell agent);

} // namespace xlvin::envs
