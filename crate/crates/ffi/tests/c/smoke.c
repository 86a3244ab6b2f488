#include <stdio.h>
#include <string.h>
#include "zsmstm.h"

int main(int argc, char **argv) {
    if (argc < 3) return 10;
    ZsmCheckpoint *ckpt = NULL;
    if (zsm_checkpoint_load(argv[1], &ckpt) != ZSM_STATUS_OK) {
        fprintf(stderr, "load: %s\n", zsm_last_error());
        return 1;
    }
    ZsmSample *sample = NULL;
    if (zsm_sample_load(argv[2], &sample) != ZSM_STATUS_OK) return 2;
    const ZsmSample *list[1] = {sample};
    ZsmStyle *style = NULL;
    if (zsm_extract_style(ckpt, list, 1, &style) != ZSM_STATUS_OK) return 3;
    ZsmPose *pose = NULL;
    if (zsm_transfer(ckpt, sample, style, &pose) != ZSM_STATUS_OK) return 4;
    size_t wrists[2] = {1, 2};
    ZsmMetrics m;
    if (zsm_metrics(zsm_pose_data(pose), zsm_pose_frames(pose), zsm_pose_cols(pose), 15.0, wrists, 2, &m) != ZSM_STATUS_OK) return 5;
    ZsmCheckpoint *missing = NULL;
    if (zsm_checkpoint_load("/nonexistent/x.ckpt", &missing) != ZSM_STATUS_DATA || missing != NULL) return 6;
    if (strlen(zsm_last_error()) == 0) return 7;
    printf("%zu %zu %.6f\n", zsm_pose_frames(pose), zsm_pose_cols(pose), m.bbox_perimeter);
    zsm_pose_free(pose);
    zsm_style_free(style);
    zsm_sample_free(sample);
    zsm_checkpoint_free(ckpt);
    return 0;
}
