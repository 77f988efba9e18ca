#include "twa/subspace.hpp"

#include <json.hpp>

#include <fstream>

namespace twa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string column_file(std::size_t r, std::size_t i) {
    return "basis_g" + std::to_string(r) + "_c" + std::to_string(i) + ".twa1";
}

std::string center_file(std::size_t r) { return "center_g" + std::to_string(r) + ".twa1"; }

} // namespace

void write_basis(const fs::path& dir, const SubspaceBasis& basis) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw StorageError("cannot create " + dir.string() + ": " + ec.message());

    json columns = json::array(), degenerate = json::array();
    for (std::size_t r = 0; r < basis.groups(); ++r) {
        write_twa1(dir / center_file(r), basis.centers[r]);
        for (std::size_t i = 0; i < basis.columns(r); ++i)
            write_twa1(dir / column_file(r, i), basis.blocks[r].col(static_cast<Eigen::Index>(i)));
        columns.push_back(basis.columns(r));
        degenerate.push_back(basis.degenerate[r]);
    }
    const json sidecar{{"partition", basis.partition.boundaries()},
                       {"n", basis.n},
                       {"orthogonalized", basis.orthogonalized},
                       {"columns", columns},
                       {"degenerate", degenerate}};
    std::ofstream out(dir / "basis.json");
    if (!out) throw StorageError("cannot write " + (dir / "basis.json").string());
    out << sidecar.dump(2) << "\n";
}

SubspaceBasis read_basis(const fs::path& dir) {
    const fs::path sidecar_path = dir / "basis.json";
    std::ifstream in(sidecar_path);
    if (!in) throw MissingFileError(sidecar_path.string(), "basis sidecar not found");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw CorruptFileError(sidecar_path.string(), e.what());
    }

    SubspaceBasis basis;
    basis.partition = LayerPartition(j.at("partition").get<std::vector<std::size_t>>());
    basis.n = j.at("n").get<std::size_t>();
    basis.orthogonalized = j.at("orthogonalized").get<bool>();
    const auto columns = j.contains("columns")
                             ? j.at("columns").get<std::vector<std::size_t>>()
                             : std::vector<std::size_t>(basis.partition.groups(), basis.n);
    for (std::size_t r = 0; r < basis.partition.groups(); ++r) {
        const auto rows = static_cast<Eigen::Index>(basis.partition.size(r));
        ParamVector center = read_twa1(dir / center_file(r));
        if (center.size() != rows) throw DimensionMismatchError((dir / center_file(r)).string(), "center length does not match partition");
        Matrix<double> block(rows, static_cast<Eigen::Index>(columns.at(r)));
        for (std::size_t i = 0; i < columns[r]; ++i) {
            const fs::path file = dir / column_file(r, i);
            const ParamVector col = read_twa1(file);
            if (col.size() != rows) throw DimensionMismatchError(file.string(), "column length does not match partition");
            block.col(static_cast<Eigen::Index>(i)) = col;
        }
        basis.centers.push_back(std::move(center));
        basis.blocks.push_back(std::move(block));
        if (j.contains("degenerate"))
            basis.degenerate.push_back(j.at("degenerate").at(r).get<std::vector<bool>>());
        else
            basis.degenerate.emplace_back(columns[r], false);
    }
    return basis;
}

} // namespace twa
