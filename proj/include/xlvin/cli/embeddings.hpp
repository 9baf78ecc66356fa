#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xlvin/envs/maze_grid.hpp"
#include "xlvin/policy/policy.hpp"

namespace xlvin::cli {

struct Pca {
    Eigen::RowVectorXd mean;      // [d]
    Eigen::MatrixXd components;   // [d, c], orthonormal columns
    Eigen::MatrixXd projected;    // [n, c], centered data times components

    Eigen::MatrixXd project(const Eigen::MatrixXd& x) const;
};

// Principal components from the SVD of the centered rows. Throws
// ContractViolation for fewer than 4 rows or more components than the data
// dimension.
Pca pca(const Eigen::MatrixXd& x, std::size_t n_components = 3);

struct EmbeddingPoint {
    envs::Cell cell;
    Eigen::Vector3d coords;
    int distance_to_goal = -1;  // BFS moves; -1 when unreachable
};

struct EmbeddingEdge {
    envs::Cell cell;
    std::size_t action = 0;
    Eigen::Vector3d successor;  // projected h + T(h, a)
};

struct EmbeddingExport {
    std::vector<EmbeddingPoint> points;
    std::vector<EmbeddingEdge> edges;  // empty for the baseline
    Pca pca;
};

// Embeds every free cell of the maze as the agent position.
EmbeddingExport embed_maze(const policy::XlvinPolicy& policy, const envs::MazeGrid& maze);

// points.csv: row,col,pc1,pc2,pc3,distance_to_goal
// edges.csv: row,col,action,pc1,pc2,pc3
void write_embeddings(const EmbeddingExport& e, const std::string& points_path, const std::string& edges_path);

} // namespace xlvin::cli
