#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "mdc/image_io.hpp"
#include "mdc/pipeline.hpp"
#include "mdc/tensor_io.hpp"
#include "oracles.hpp"

using namespace mdc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("mdc_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST(TensorIo, HeaderLayoutIsLittleEndian) {
    Tensor t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, -0.5f});
    const auto bytes = encode_tensor(t);
    ASSERT_EQ(bytes.size(), 4u + 8u + 24u);
    EXPECT_EQ(bytes[0], 2);
    EXPECT_EQ(bytes[1] | bytes[2] | bytes[3], 0);
    EXPECT_EQ(bytes[4], 2);
    EXPECT_EQ(bytes[8], 3);
    float last;
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= std::uint32_t(bytes[32 + i]) << (8 * i);
    std::memcpy(&last, &bits, 4);
    EXPECT_EQ(last, -0.5f);
}

TEST(TensorIo, RoundTripIsLossless) {
    Rng rng(5);
    auto t = oracle::random_tensor<float>({2, 3, 4, 5}, rng, -1e6, 1e6);
    EXPECT_EQ(decode_tensor(encode_tensor(t)), t);
    const auto dir = scratch_dir("tns");
    save_tensor(t, dir / "a" / "t.tns");
    EXPECT_EQ(load_tensor(dir / "a" / "t.tns"), t);
}

TEST(TensorIo, RejectsTruncatedInput) {
    Tensor t({4}, 1.0f);
    auto bytes = encode_tensor(t);
    bytes.pop_back();
    EXPECT_THROW(decode_tensor(bytes), Error);
    EXPECT_THROW(decode_tensor({1, 0}), Error);
}

TEST(Pnm, RoundTripGrayAndColor) {
    Image gray(3, 5, 1);
    Image rgb(4, 2, 3);
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) gray.pixels[i] = static_cast<std::uint8_t>(i * 17);
    for (std::size_t i = 0; i < rgb.pixels.size(); ++i) rgb.pixels[i] = static_cast<std::uint8_t>(255 - i * 7);
    EXPECT_EQ(decode_pnm(encode_pnm(gray)), gray);
    EXPECT_EQ(decode_pnm(encode_pnm(rgb)), rgb);
}

TEST(Pnm, SkipsHeaderComments) {
    const std::string text = "P5\n# made by hand\n2 1\n255\n";
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    bytes.push_back(7);
    bytes.push_back(9);
    const Image img = decode_pnm(bytes);
    EXPECT_EQ(img.width, 2u);
    EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{7, 9}));
}

TEST(Pnm, RejectsUnsupportedFormats) {
    const std::string ascii = "P2\n1 1\n255\n0\n";
    EXPECT_THROW(decode_pnm(std::vector<std::uint8_t>(ascii.begin(), ascii.end())), Error);
    const std::string deep = "P5\n1 1\n65535\n";
    EXPECT_THROW(decode_pnm(std::vector<std::uint8_t>(deep.begin(), deep.end())), Error);
}

TEST(Pnm, LabelMapRoundTripKeepsIgnore) {
    LabelMap m(2, 3);
    m.labels = {0, 1, 255, 3, 2, 255};
    EXPECT_EQ(image_to_label_map(label_map_to_image(m)), m);
}

TEST(Checkpoint, MdcRoundTripIsBitExact) {
    MdcSpec spec;
    spec.backbone = parse_layers("c4 r p2 c6 r");
    spec.block_channels = 5;
    spec.num_classes = 3;
    const MdcModel model = build_mdc(spec, 42);
    const auto dir = scratch_dir("ckpt_mdc");
    save_mdc(model, dir, 42, 7);
    const MdcModel back = load_mdc(dir);
    EXPECT_EQ(back.params, model.params);
    EXPECT_EQ(back.spec.block_dilations, spec.block_dilations);
    EXPECT_EQ(back.spec.backbone, spec.backbone);
    EXPECT_THROW(load_fcn(dir), Error);
}

TEST(Checkpoint, FcnRoundTripIsBitExact) {
    FcnSpec spec;
    spec.backbone = parse_layers("c4 r p2 c6 r");
    spec.num_classes = 2;
    const FcnModel model = build_fcn(spec, 3);
    const auto dir = scratch_dir("ckpt_fcn");
    save_fcn(model, dir, 3, 1);
    EXPECT_EQ(load_fcn(dir).params, model.params);
}

TEST(Checkpoint, MissingParameterIsReported) {
    MdcSpec spec;
    spec.backbone = parse_layers("c4 r");
    spec.block_channels = 3;
    spec.num_classes = 2;
    MdcModel model = build_mdc(spec, 1);
    model.params.erase(model.params.begin());
    const auto dir = scratch_dir("ckpt_missing");
    save_mdc(model, dir, 1, 0);
    EXPECT_THROW(load_mdc(dir), Error);
}
