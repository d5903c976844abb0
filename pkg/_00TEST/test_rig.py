import numpy as np
import pytest

from config import OcclusionConfig, RigConfig
from errors import ConfigError, GeometryError
from engines import rig
from engines.skeleton import CameraModel, JointId, Pose2D, Pose3D, bone_lengths, project_to_view


@pytest.fixture
def subject():
    return rig.make_subject(0, seed=0)


class TestSubjectsAndTasks:
    def test_stature_within_range(self):
        for sid in range(50):
            s = rig.make_subject(sid, seed=3)
            assert rig.STATURE_RANGE_MM[0] <= s.stature_mm <= rig.STATURE_RANGE_MM[1]
            assert all(v > 0 for v in s.segments.values())

    def test_subject_is_deterministic(self):
        assert rig.make_subject(4, seed=1) == rig.make_subject(4, seed=1)
        assert rig.make_subject(4, seed=1) != rig.make_subject(4, seed=2)

    def test_task_grid_is_three_by_three_by_two(self):
        grid = rig.task_grid(7)
        assert len(grid) == 18
        assert len({t.sequence_id for t in grid}) == 18
        assert {t.vertical_range for t in grid} == set(rig.VerticalRange)
        assert {t.end_angle for t in grid} == {0, 30, 60}
        assert sum(t.split == "train" for t in grid) == 9

    def test_sequence_id_format(self):
        task = rig.LiftTask(rig.VerticalRange.KS, 30, 2, 12)
        assert task.sequence_id == "S012_KS_A30_R2"
        assert task.split == "test"

    @pytest.mark.parametrize("kwargs", [{"end_angle": 45}, {"repetition": 3}, {"duration_frames": 1}])
    def test_invalid_task(self, kwargs):
        base = {"vertical_range": "FK", "end_angle": 0, "repetition": 1, "subject_id": 0}
        with pytest.raises(ConfigError):
            rig.LiftTask(**{**base, **kwargs})

    def test_default_cameras_look_at_subject(self):
        cameras = rig.default_cameras(RigConfig())
        assert len(cameras) == 2
        assert "90deg" in cameras[0].name and "135deg" in cameras[1].name
        for cam in cameras:
            centre = project_to_view(Pose3D(np.tile([0.0, 0.0, 900.0], (14, 1))), cam).coords[0]
            np.testing.assert_allclose(centre, [128.0, 128.0], atol=1e-9)


class TestTrajectory:
    @pytest.mark.parametrize("vr", list(rig.VerticalRange))
    @pytest.mark.parametrize("angle", rig.END_ANGLES_DEG)
    def test_task_semantics(self, subject, vr, angle):
        task = rig.LiftTask(vr, angle, 1, subject.subject_id, duration_frames=40)
        poses = rig.generate_lift_trajectory(task, subject, seed=0)
        assert len(poses) == 40

        start, end = vr.heights
        assert rig.wrist_height(poses[0]) == pytest.approx(subject.height(start), abs=1e-6)
        assert rig.wrist_height(poses[-1]) == pytest.approx(subject.height(end), abs=1e-6)
        assert rig.wrist_azimuth_deg(poses[-1]) == pytest.approx(angle, abs=1e-6)

    def test_feet_stay_planted(self, subject):
        task = rig.LiftTask(rig.VerticalRange.FS, 60, 2, subject.subject_id, duration_frames=60)
        poses = rig.generate_lift_trajectory(task, subject, seed=0)
        for joint in (JointId.L_ANKLE, JointId.R_ANKLE):
            track = np.stack([p.joint(joint) for p in poses])
            assert np.max(np.abs(track - track[0])) < 1e-9

    def test_bones_are_rigid(self, subject):
        task = rig.LiftTask(rig.VerticalRange.KS, 30, 1, subject.subject_id, duration_frames=60)
        lengths = np.stack([bone_lengths(p) for p in rig.generate_lift_trajectory(task, subject, seed=0)])
        assert np.max(np.abs(lengths - lengths[0])) < 1e-6

    def test_left_right_limbs_match(self, subject):
        pose = rig.pose_from_params(subject, subject.height("knuckle"), 0.4, 0.0, 20.0)
        pairs = [((JointId.L_SHOULDER, JointId.L_ELBOW), (JointId.R_SHOULDER, JointId.R_ELBOW)),
                 ((JointId.L_ELBOW, JointId.L_WRIST), (JointId.R_ELBOW, JointId.R_WRIST)),
                 ((JointId.L_HIP, JointId.L_KNEE), (JointId.R_HIP, JointId.R_KNEE)),
                 ((JointId.L_KNEE, JointId.L_ANKLE), (JointId.R_KNEE, JointId.R_ANKLE))]
        for (a, b), (c, d) in pairs:
            left = np.linalg.norm(pose.joint(a) - pose.joint(b))
            right = np.linalg.norm(pose.joint(c) - pose.joint(d))
            assert left == pytest.approx(right, abs=1e-9)

    def test_repetitions_differ_but_are_seeded(self, subject):
        r1 = rig.LiftTask(rig.VerticalRange.FK, 0, 1, subject.subject_id, duration_frames=20)
        r2 = rig.LiftTask(rig.VerticalRange.FK, 0, 2, subject.subject_id, duration_frames=20)
        a = rig.generate_lift_trajectory(r1, subject, seed=0)
        b = rig.generate_lift_trajectory(r1, subject, seed=0)
        c = rig.generate_lift_trajectory(r2, subject, seed=0)
        assert all(np.array_equal(x.coords, y.coords) for x, y in zip(a, b))
        assert not all(np.array_equal(x.coords, z.coords) for x, z in zip(a, c))

    def test_task_of_other_subject_is_rejected(self, subject):
        task = rig.LiftTask(rig.VerticalRange.FK, 0, 1, subject.subject_id + 1)
        with pytest.raises(ConfigError):
            rig.generate_lift_trajectory(task, subject, seed=0)


class TestRendering:
    def test_render_shape_and_range(self, subject):
        cam = rig.default_cameras(RigConfig())[0]
        pose = rig.pose_from_params(subject, subject.height("floor"), 1.0, 0.0, 0.0)
        img = rig.render_view(pose, cam)
        assert img.shape == (256, 256, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0
        assert (np.abs(img - rig.RenderStyle().background) > 1e-6).any()

    def test_joints_are_drawn_where_they_project(self, subject):
        cam = rig.default_cameras(RigConfig())[1]
        pose = rig.pose_from_params(subject, subject.height("knuckle"), 0.4, 0.0, 30.0)
        img = rig.render_view(pose, cam)
        px = np.rint(project_to_view(pose, cam).coords).astype(int)
        # 관절 원은 흰색이므로 관절 위치 픽셀은 배경보다 밝음
        for x, y in px:
            assert img[y, x].mean() > rig.RenderStyle().background + 0.2

    def test_empty_frame_is_background(self):
        cam = rig.default_cameras(RigConfig())[0]
        img = rig.render_view(None, cam, rig.RenderStyle(image_size=256, background=0.3))
        assert np.all(img == 0.3)

    def test_rendering_is_deterministic(self, subject):
        cam = rig.default_cameras(RigConfig())[0]
        pose = rig.pose_from_params(subject, subject.height("shoulder"), 0.0, 0.0, 60.0)
        assert np.array_equal(rig.render_view(pose, cam), rig.render_view(pose, cam))

    def test_joint_behind_camera(self, subject):
        cam = CameraModel.look_at((0.0, 0.0, 1000.0), (-1000.0, 0.0, 1000.0), 480.0, (256, 256))
        pose = rig.pose_from_params(subject, subject.height("knuckle"), 0.2, 0.0, 0.0)
        # 카메라는 -x 방향을 바라보므로 x > 0 인 발목은 카메라 뒤
        with pytest.raises(GeometryError):
            rig.render_view(Pose3D(pose.coords + np.array([100.0, 0.0, 0.0])), cam)


class TestOccluder:
    def test_half_open_region_and_flags(self):
        img = np.zeros((20, 20, 3))
        coords = np.full((14, 2), 15.0)
        coords[0] = [5.0, 5.0]      # 영역 안
        coords[1] = [10.0, 5.0]     # x1 경계 (반열린 구간 밖)
        out, flags = rig.apply_occluder(img, (2, 2, 10, 10), Pose2D(coords, np.ones(14, dtype=bool)), seed=1)
        assert flags[0] and not flags[1] and flags.sum() == 1
        assert (out[2:10, 2:10] != 0).any()
        assert np.all(out[10:, :] == 0) and np.all(out[:, 10:] == 0)
        assert np.all(img == 0)

    def test_region_outside_image_is_noop(self):
        img = np.full((8, 8, 3), 0.5)
        out, flags = rig.apply_occluder(img, (20, 20, 30, 30))
        assert np.array_equal(out, img) and not flags.any()

    def test_region_covers_chosen_joint(self):
        coords = np.tile([50.0, 60.0], (14, 1))
        pose2d = Pose2D(coords, np.ones(14, dtype=bool))
        gen = np.random.default_rng(0)
        for _ in range(50):
            x0, y0, x1, y1 = rig.occluder_region_for(pose2d, 3, 20, gen)
            assert x1 - x0 == 20 and y1 - y0 == 20
            assert x0 <= 50 < x1 and y0 <= 60 < y1

    def test_occlusion_config_validation(self):
        with pytest.raises(ConfigError):
            OcclusionConfig(probability=1.5)
        with pytest.raises(ConfigError):
            RigConfig(occlusion=OcclusionConfig(view=5))
