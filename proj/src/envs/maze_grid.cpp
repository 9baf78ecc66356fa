#include "xlvin/envs/maze_grid.hpp"

#include <algorithm>
#include <deque>

#include "xlvin/errors.hpp"

namespace xlvin::envs {

std::vector<int> bfs_distances(const MazeGrid& maze, Cell from) {
    std::vector<int> dist(maze.size * maze.size, -1);
    if (!maze.free(from)) return dist;
    std::deque<Cell> queue{from};
    dist[maze.index(from)] = 0;
    while (!queue.empty()) {
        Cell c = queue.front();
        queue.pop_front();
        for (const auto& m : kMoves) {
            Cell n{c.row + m.row, c.col + m.col};
            if (!maze.free(n) || dist[maze.index(n)] >= 0) continue;
            dist[maze.index(n)] = dist[maze.index(c)] + 1;
            queue.push_back(n);
        }
    }
    return dist;
}

std::vector<std::size_t> shortest_path_actions(const MazeGrid& maze) {
    const auto to_goal = bfs_distances(maze, maze.goal);
    std::vector<std::size_t> path;
    Cell c = maze.start;
    if (to_goal[maze.index(c)] < 0) return path;
    while (c != maze.goal) {
        for (std::size_t a = 0; a < kMoves.size(); ++a) {
            Cell n{c.row + kMoves[a].row, c.col + kMoves[a].col};
            if (maze.free(n) && to_goal[maze.index(n)] == to_goal[maze.index(c)] - 1) {
                path.push_back(a);
                c = n;
                break;
            }
        }
    }
    return path;
}

void validate(const MazeGrid& maze) {
    require(maze.size >= 2, "maze size must be at least 2");
    require(maze.obstacles.size() == maze.size * maze.size, "obstacle grid size mismatch");
    require(maze.in_bounds(maze.start) && maze.in_bounds(maze.goal), "start/goal out of bounds");
    require(maze.start != maze.goal, "start and goal must differ");
    require(!maze.blocked(maze.start) && !maze.blocked(maze.goal), "start/goal on an obstacle");
    const int d = bfs_distances(maze, maze.start)[maze.index(maze.goal)];
    require(d > 0, "goal unreachable from start");
    require(d == maze.difficulty,
            "stored difficulty " + std::to_string(maze.difficulty) + " disagrees with BFS length " + std::to_string(d));
}

nlohmann::json to_json(const MazeGrid& maze) {
    std::string bits(maze.obstacles.size(), '0');
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (maze.obstacles[i]) bits[i] = '1';
    return {{"size", maze.size},
            {"obstacles", bits},
            {"start", {maze.start.row, maze.start.col}},
            {"goal", {maze.goal.row, maze.goal.col}},
            {"difficulty", maze.difficulty},
            {"seed", maze.seed}};
}

MazeGrid maze_from_json(const nlohmann::json& j) {
    MazeGrid m;
    m.size = j.at("size").get<std::size_t>();
    const auto bits = j.at("obstacles").get<std::string>();
    require(bits.size() == m.size * m.size, "obstacle bitmask length mismatch");
    m.obstacles.resize(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        require(bits[i] == '0' || bits[i] == '1', "obstacle bitmask must contain only 0/1");
        m.obstacles[i] = bits[i] == '1';
    }
    m.start = {j.at("start").at(0).get<int>(), j.at("start").at(1).get<int>()};
    m.goal = {j.at("goal").at(0).get<int>(), j.at("goal").at(1).get<int>()};
    m.difficulty = j.at("difficulty").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    validate(m);
    return m;
}

std::string ascii(const MazeGrid& maze, Cell agent) {
    std::string out;
    for (int r = 0; r < static_cast<int>(maze.size); ++r) {
        for (int c = 0; c < static_cast<int>(maze.size); ++c) {
            Cell cell{r, c};
            char ch = maze.blocked(cell) ? '#' : '.';
            if (cell == maze.goal) ch = 'G';
            if (cell == agent) ch = 'A';
            out += ch;
        }
        out += '\n';
    }
    return out;
}

} // namespace xlvin::envs
