#include "xlvin/cli/embeddings.hpp"

#include <cstdio>
#include <stdexcept>

#include "xlvin/envs/maze.hpp"
#include "xlvin/errors.hpp"

namespace xlvin::cli {

Eigen::MatrixXd Pca::project(const Eigen::MatrixXd& x) const { return (x.rowwise() - mean) * components; }

Pca pca(const Eigen::MatrixXd& x, std::size_t n_components) {
    require(x.rows() >= 4, "PCA needs at least 4 states, got " + std::to_string(x.rows()));
    require(n_components >= 1 && static_cast<Eigen::Index>(n_components) <= x.cols(),
            "PCA component count must lie in [1, data dimension]");
    Pca p;
    p.mean = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - p.mean;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    p.components = svd.matrixV().leftCols(static_cast<Eigen::Index>(n_components));
    p.projected = centered * p.components;
    return p;
}

EmbeddingExport embed_maze(const policy::XlvinPolicy& policy, const envs::MazeGrid& maze) {
    std::vector<envs::Cell> cells;
    std::vector<envs::Observation> obs;
    for (int r = 0; r < static_cast<int>(maze.size); ++r)
        for (int c = 0; c < static_cast<int>(maze.size); ++c)
            if (maze.free({r, c})) {
                cells.push_back({r, c});
                obs.push_back(envs::maze_observation(maze, {r, c}));
            }
    require(cells.size() >= 4, "PCA needs at least 4 states, maze has " + std::to_string(cells.size()) + " free cells");
    const auto& enc = policy.transe().encoder;
    const nn::Tensor h = enc(enc.batch(obs), false);
    const auto n = static_cast<Eigen::Index>(cells.size()), k = static_cast<Eigen::Index>(h.size(1));
    Eigen::MatrixXd x(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < k; ++j) x(i, j) = h.at(static_cast<std::size_t>(i * k + j));

    EmbeddingExport out;
    out.pca = pca(x, 3);
    const auto dist = envs::bfs_distances(maze, maze.goal);
    for (Eigen::Index i = 0; i < n; ++i)
        out.points.push_back({cells[i], out.pca.projected.row(i).transpose(), dist[maze.index(cells[i])]});

    if (policy.config().planning) {
        const std::size_t a = policy.config().n_actions;
        const nn::Tensor t = policy.transe().transition.all_actions(h);
        Eigen::MatrixXd succ(n * static_cast<Eigen::Index>(a), k);
        for (Eigen::Index i = 0; i < n; ++i)
            for (std::size_t act = 0; act < a; ++act)
                for (Eigen::Index j = 0; j < k; ++j) {
                    const auto row = i * static_cast<Eigen::Index>(a) + static_cast<Eigen::Index>(act);
                    succ(row, j) = x(i, j) + t.at(static_cast<std::size_t>(row * k + j));
                }
        const Eigen::MatrixXd proj = out.pca.project(succ);
        for (Eigen::Index i = 0; i < n; ++i)
            for (std::size_t act = 0; act < a; ++act)
                out.edges.push_back(
                    {cells[i], act, proj.row(i * static_cast<Eigen::Index>(a) + static_cast<Eigen::Index>(act)).transpose()});
    }
    return out;
}

void write_embeddings(const EmbeddingExport& e, const std::string& points_path, const std::string& edges_path) {
    std::FILE* f = std::fopen(points_path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + points_path);
    std::fprintf(f, "row,col,pc1,pc2,pc3,distance_to_goal\n");
    for (const auto& p : e.points)
        std::fprintf(f, "%d,%d,%.17g,%.17g,%.17g,%d\n", p.cell.row, p.cell.col, p.coords[0], p.coords[1], p.coords[2],
                     p.distance_to_goal);
    std::fclose(f);
    f = std::fopen(edges_path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + edges_path);
    std::fprintf(f, "row,col,action,pc1,pc2,pc3\n");
    for (const auto& d : e.edges)
        std::fprintf(f, "%d,%d,%zu,%.17g,%.17g,%.17g\n", d.cell.row, d.cell.col, d.action, d.successor[0],
                     d.successor[1], d.successor[2]);
    std::fclose(f);
}

} // namespace xlvin::cli
