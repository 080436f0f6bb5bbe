use super::EnvState;

/// Row-major RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            data.extend_from_slice(&fill);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn put(&mut self, col: i64, row: i64, rgb: [u8; 3]) {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return;
        }
        let i = 3 * (row as usize * self.width + col as usize);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

pub const SKY: [u8; 3] = [240, 240, 240];
pub const GROUND: [u8; 3] = [60, 60, 60];
pub const BODY: [u8; 3] = [40, 90, 200];
pub const HEADING: [u8; 3] = [220, 50, 40];

const VIEW_BEHIND: f64 = 2.0;
const VIEW_AHEAD: f64 = 6.0;
const VIEW_BOTTOM: f64 = -0.5;
const VIEW_TOP: f64 = 3.5;
const BODY_RADIUS: i64 = 5;
const HEADING_LENGTH: i64 = 10;
const GROUND_TICK: i64 = 3;

/// Maps a world point to continuous pixel coordinates (column, row) for a
/// camera that follows `state` horizontally.
pub fn world_to_pixel(state: &EnvState, wx: f64, wz: f64, width: usize, height: usize) -> (f64, f64) {
    let left = state.x - VIEW_BEHIND;
    let col = (wx - left) / (VIEW_BEHIND + VIEW_AHEAD) * width as f64;
    let row = (VIEW_TOP - wz) / (VIEW_TOP - VIEW_BOTTOM) * height as f64;
    (col, row)
}

/// Draws the ground line with a tick every metre, the body disc and a
/// heading tick along the body-up axis.
pub fn render_frame(state: &EnvState, width: usize, height: usize) -> Frame {
    assert!(width >= 16 && height >= 16, "frames must be at least 16x16");
    let mut frame = Frame::new(width, height, SKY);

    let (_, ground_row) = world_to_pixel(state, 0.0, 0.0, width, height);
    let ground_row = ground_row.floor() as i64;
    for col in 0..width as i64 {
        frame.put(col, ground_row, GROUND);
    }
    let left = state.x - VIEW_BEHIND;
    let mut marker = left.ceil();
    while marker <= state.x + VIEW_AHEAD {
        let (col, _) = world_to_pixel(state, marker, 0.0, width, height);
        let col = col.floor() as i64;
        for dr in 1..=GROUND_TICK {
            frame.put(col, ground_row + dr, GROUND);
        }
        marker += 1.0;
    }

    let (cx, cy) = world_to_pixel(state, state.x, state.z, width, height);
    let (cx, cy) = (cx.floor() as i64, cy.floor() as i64);
    for dr in -BODY_RADIUS..=BODY_RADIUS {
        for dc in -BODY_RADIUS..=BODY_RADIUS {
            if dr * dr + dc * dc <= BODY_RADIUS * BODY_RADIUS {
                frame.put(cx + dc, cy + dr, BODY);
            }
        }
    }
    // Body-up axis is (-sin, cos) in world coordinates; rows grow downward.
    let (dx, dy) = (-state.pitch.sin(), -state.pitch.cos());
    for t in 1..=HEADING_LENGTH {
        let col = cx + (t as f64 * dx).round() as i64;
        let row = cy + (t as f64 * dy).round() as i64;
        frame.put(col, row, HEADING);
    }
    frame
}
