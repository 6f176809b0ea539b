#include "pointprop/morphology.hpp"

#include <numeric>

namespace pointprop::morph {

namespace {

struct DisjointSets {
    std::vector<std::int32_t> parent;

    std::int32_t make() {
        parent.push_back(static_cast<std::int32_t>(parent.size()));
        return parent.back();
    }
    std::int32_t find(std::int32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) {
            // Keep the smaller (earlier) root so roots follow raster order.
            if (a < b) parent[b] = a; else parent[a] = b;
        }
    }
};

}  // namespace

Components label_components(const BinaryMask& mask, Connectivity connectivity) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::int32_t> provisional(mask.size(), -1);
    DisjointSets sets;

    // Already-visited neighbors in raster order.
    const bool eight = connectivity == Connectivity::Eight;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (mask[i] == 0) {
                continue;
            }
            std::int32_t current = -1;
            auto visit = [&](int nx, int ny) {
                if (nx < 0 || nx >= w || ny < 0) {
                    return;
                }
                const auto n = provisional[static_cast<std::size_t>(ny) * w + nx];
                if (n < 0) {
                    return;
                }
                if (current < 0) {
                    current = n;
                } else {
                    sets.unite(current, n);
                }
            };
            visit(x - 1, y);
            visit(x, y - 1);
            if (eight) {
                visit(x - 1, y - 1);
                visit(x + 1, y - 1);
            }
            provisional[i] = current >= 0 ? current : sets.make();
        }
    }

    Components out;
    out.labels.assign(mask.size(), 0);
    std::vector<std::int32_t> final_id(sets.parent.size(), 0);
    for (std::size_t i = 0; i < provisional.size(); ++i) {
        if (provisional[i] < 0) {
            continue;
        }
        const auto root = sets.find(provisional[i]);
        if (final_id[root] == 0) {
            out.areas.push_back(0);
            final_id[root] = static_cast<std::int32_t>(out.areas.size());
        }
        out.labels[i] = final_id[root];
        ++out.areas[final_id[root] - 1];
    }
    return out;
}

std::vector<Point> disk(int radius) {
    std::vector<Point> offsets;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy <= radius * radius) {
                offsets.push_back({dx, dy});
            }
        }
    }
    return offsets;
}

BinaryMask erode(const BinaryMask& mask, const std::vector<Point>& element) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool keep = mask.at(x, y) != 0;
            for (const auto& d : element) {
                if (!keep) break;
                const int nx = x + d.x, ny = y + d.y;
                keep = nx >= 0 && nx < w && ny >= 0 && ny < h && mask.at(nx, ny) != 0;
            }
            out[static_cast<std::size_t>(y) * w + x] = keep ? 1 : 0;
        }
    }
    return BinaryMask(mask.dims(), std::move(out));
}

BinaryMask dilate(const BinaryMask& mask, const std::vector<Point>& element) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask.at(x, y) == 0) {
                continue;
            }
            for (const auto& d : element) {
                const int nx = x + d.x, ny = y + d.y;
                if (nx >= 0 && nx < w && ny >= 0 && ny < h) {
                    out[static_cast<std::size_t>(ny) * w + nx] = 1;
                }
            }
        }
    }
    return BinaryMask(mask.dims(), std::move(out));
}

BinaryMask open(const BinaryMask& mask, int radius) {
    if (radius <= 0) {
        return mask;
    }
    const auto element = disk(radius);
    return dilate(erode(mask, element), element);
}

BinaryMask fill_holes(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::uint8_t> reached(mask.size(), 0);
    std::vector<std::size_t> stack;
    auto seed = [&](int x, int y) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (mask[i] == 0 && reached[i] == 0) {
            reached[i] = 1;
            stack.push_back(i);
        }
    };
    for (int x = 0; x < w; ++x) {
        seed(x, 0);
        seed(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        seed(0, y);
        seed(w - 1, y);
    }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const int x = static_cast<int>(i % w);
        const int y = static_cast<int>(i / w);
        if (x > 0) seed(x - 1, y);
        if (x + 1 < w) seed(x + 1, y);
        if (y > 0) seed(x, y - 1);
        if (y + 1 < h) seed(x, y + 1);
    }
    std::vector<std::uint8_t> out(mask.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (mask[i] != 0 || reached[i] == 0) ? 1 : 0;
    }
    return BinaryMask(mask.dims(), std::move(out));
}

BinaryMask remove_small(const BinaryMask& mask, std::size_t min_area, Connectivity connectivity) {
    const auto components = label_components(mask, connectivity);
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto id = components.labels[i];
        out[i] = (id > 0 && components.areas[id - 1] >= min_area) ? 1 : 0;
    }
    return BinaryMask(mask.dims(), std::move(out));
}

}  // namespace pointprop::morph
