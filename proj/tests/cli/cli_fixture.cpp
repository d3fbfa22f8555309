// Helper for the CLI tests: writes inputs the phantom command cannot make and
// checks outputs. Exit 0 on success.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "kneemorph/nifti.hpp"
#include "kneemorph/warp.hpp"

using namespace kneemorph;

namespace {

int usage() {
    std::fprintf(stderr,
                 "usage: cli_fixture zero-svf <like.nii.gz> <out.nii.gz>\n"
                 "       cli_fixture same-labels <a.nii.gz> <b.nii.gz>\n"
                 "       cli_fixture tibial-regions <regions.json>\n");
    return 64;
}

int tibial_regions(const std::string& path) {
    std::ifstream is(path);
    const auto j = nlohmann::json::parse(is);
    int present = 0;
    double central = -1.0;
    for (const auto& r : j.at("regions")) {
        if (r.at("vertices").get<int>() > 0) ++present;
        if (r.at("region") == "cMTC") central = r.at("area_fraction").get<double>();
    }
    std::printf("regions present %d, central fraction %.4f\n", present, central);
    return present == 5 && std::abs(central - 0.20) <= 0.005 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) return usage();
    const std::string cmd = argv[1];
    try {
        if (cmd == "zero-svf" && argc == 4) {
            const LabelVolume like = nifti::load_labels(argv[2]);
            VectorField f;
            f.geometry = like.geometry();
            f.vectors.assign(like.size(), Vec3::Zero());
            nifti::save_field(f, argv[3]);
            return 0;
        }
        if (cmd == "same-labels" && argc == 4) {
            const LabelVolume a = nifti::load_labels(argv[2]);
            const LabelVolume b = nifti::load_labels(argv[3]);
            const bool same = a.data() == b.data() && same_grid(a.geometry(), b.geometry());
            std::printf("%s\n", same ? "identical" : "different");
            return same ? 0 : 1;
        }
        if (cmd == "tibial-regions" && argc == 3) return tibial_regions(argv[2]);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
    return usage();
}
