// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "spot/config.hpp"
#include "spot/errors.hpp"

#include <gtest/gtest.h>

using namespace spot;

namespace {

int error_line(const std::string& text) {
    try {
        parse_run_config(text);
    } catch (const ParseError& e) {
        return e.line();
    }
    return -1;
}

} // namespace

TEST(RunConfig, DefaultsAreDeskPreset) {
    const RunConfig c = parse_run_config("");
    EXPECT_EQ(c, preset_config("desk"));
    EXPECT_EQ(c.batch_size, 8);
    EXPECT_EQ(c.epochs, 60);
    EXPECT_EQ(c.model.level_n, (std::array<Index, 3>{512, 128, 32}));
    EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, PresetsAreValid) {
    for (const char* name : {"desk", "paper", "micro"}) EXPECT_NO_THROW(preset_config(name).validate()) << name;
    EXPECT_EQ(preset_config("paper").batch_size, 32);
    EXPECT_EQ(preset_config("micro").model.out_n, 32);
    EXPECT_THROW(preset_config("huge"), DataError);
}

TEST(RunConfig, ParsesKeysCommentsAndPresetFirst) {
    const RunConfig c = parse_run_config("# a comment\n"
                                         "epochs = 7   # trailing\n"
                                         "level_n = 16, 8, 4\n"
                                         "preset = micro\n"
                                         "pdma_scales = 1,3\n"
                                         "use_pla = false\n"
                                         "lr = 2.5e-4\n"
                                         "\n"
                                         "dataset = /tmp/x.spds\n");
    EXPECT_EQ(c.preset, "micro");
    EXPECT_EQ(c.epochs, 7);
    EXPECT_EQ(c.batch_size, 2); // from the preset, applied before other keys
    EXPECT_EQ(c.model.pdma_scales, (std::vector<Index>{1, 3}));
    EXPECT_FALSE(c.model.use_pla);
    EXPECT_EQ(c.lr, 2.5e-4);
    EXPECT_EQ(c.dataset, "/tmp/x.spds");
}

TEST(RunConfig, ErrorsCiteKeyAndLine) {
    EXPECT_EQ(error_line("epochs = 3\nbatch_size = many\n"), 2);
    EXPECT_EQ(error_line("\n\nnot a pair\n"), 3);
    EXPECT_EQ(error_line("epochs = 3\nfoo = 1\n"), 2);
    EXPECT_EQ(error_line("epochs = 3\nlr = 1\nepochs = 4\n"), 3);
    EXPECT_EQ(error_line("level_n = 1,2\n"), 1);
    EXPECT_EQ(error_line("use_pdma = maybe\n"), 1);
    try {
        parse_run_config("lr = fast\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("'lr'"), std::string::npos) << e.what();
    }
}

TEST(RunConfig, SerializationIsLossless) {
    RunConfig c = preset_config("micro");
    c.lr = 0.1 + 0.2; // not exactly representable in short decimal
    c.model.radii = {0.123456789012345, 0.5};
    c.seed = 18446744073709551615ull;
    c.model.pdma_vanilla = true;
    c.loss.coarse1 = 1.0 / 3.0;
    c.checkpoint = "out/model.ckpt";
    const RunConfig back = parse_run_config(serialize_run_config(c));
    EXPECT_EQ(back, c);
    EXPECT_EQ(back.lr, c.lr);
    EXPECT_EQ(back.model.radii, c.model.radii);
    EXPECT_EQ(back.seed, c.seed);
}

TEST(RunConfig, SetKeyOverrides) {
    RunConfig c = preset_config("desk");
    set_config_key(c, "neighbor_s", "8");
    set_config_key(c, "cd_squared", "0");
    EXPECT_EQ(c.model.neighbor_s, 8);
    EXPECT_FALSE(c.model.cd_squared);
    EXPECT_THROW(set_config_key(c, "nope", "1"), DataError);
}

TEST(RunConfig, ValidateRejectsOutOfRange) {
    RunConfig c = preset_config("desk");
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), DataError);
    c = preset_config("desk");
    c.val_fraction = 1.0;
    EXPECT_THROW(c.validate(), DataError);
    c = preset_config("desk");
    c.model.level_n = {512, 100, 32};
    EXPECT_THROW(c.validate(), DataError);
}
