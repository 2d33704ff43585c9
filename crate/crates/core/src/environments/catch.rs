use super::{reseed, EnvSpec, Environment, EpisodeClock, Observation, ObservationSpace, RgbFrame, StepResult};
use crate::error::Result;
use crate::numerics::Rng;

/// Logical grid side.
pub const CATCH_GRID: usize = 12;
/// Pixels per logical cell; 12 * 7 = 84.
pub const CATCH_CELL_PX: usize = 7;
/// Drops per episode.
pub const CATCH_DROPS: usize = 10;
const PADDLE_HALF: usize = 1;
const PADDLE_ROW: usize = CATCH_GRID - 1;
const PADDLE_RGB: [u8; 3] = [255, 255, 255];
const OBJECT_RGB: [u8; 3] = [255, 96, 32];

/// Catch: an object falls one row per step from a random column of the top
/// row; a 3-cell paddle on the bottom row moves left, stays or moves right
/// (actions 0, 1, 2). When the object reaches the paddle row the step pays +1
/// for a catch or -1 for a miss and a new object appears. Ten drops make an
/// episode.
pub struct PixelCatch {
    spec: EnvSpec,
    rng: Rng,
    paddle: usize,
    object: (usize, usize),
    drops: usize,
    clock: EpisodeClock,
}

impl PixelCatch {
    pub fn new(seed: u64) -> Self {
        let side = CATCH_GRID * CATCH_CELL_PX;
        Self {
            spec: EnvSpec {
                name: "pixel_catch".into(),
                observation: ObservationSpace::Frame {
                    height: side,
                    width: side,
                    channels: 3,
                },
                action_count: 3,
                max_steps: CATCH_DROPS * PADDLE_ROW,
                rewards: vec![("catch".into(), 1.0), ("miss".into(), -1.0)],
            },
            rng: Rng::new(seed),
            paddle: CATCH_GRID / 2,
            object: (0, 0),
            drops: 0,
            clock: EpisodeClock::new(),
        }
    }

    /// Paddle centre column.
    pub fn paddle(&self) -> usize {
        self.paddle
    }

    /// Object `(row, col)`.
    pub fn object(&self) -> (usize, usize) {
        self.object
    }

    pub fn drops(&self) -> usize {
        self.drops
    }

    fn spawn(&mut self) {
        self.object = (0, self.rng.below(CATCH_GRID));
    }

    fn paint_cell(frame: &mut RgbFrame, row: usize, col: usize, rgb: [u8; 3]) {
        for r in row * CATCH_CELL_PX..(row + 1) * CATCH_CELL_PX {
            for c in col * CATCH_CELL_PX..(col + 1) * CATCH_CELL_PX {
                frame.set_pixel(r, c, rgb);
            }
        }
    }

    fn draw(&self) -> RgbFrame {
        let side = CATCH_GRID * CATCH_CELL_PX;
        let mut frame = RgbFrame::new(side, side);
        for c in self.paddle - PADDLE_HALF..=self.paddle + PADDLE_HALF {
            Self::paint_cell(&mut frame, PADDLE_ROW, c, PADDLE_RGB);
        }
        Self::paint_cell(&mut frame, self.object.0, self.object.1, OBJECT_RGB);
        frame
    }
}

impl Environment for PixelCatch {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, episode_seed: Option<u64>) -> Observation {
        reseed(&mut self.rng, episode_seed);
        self.clock.reset();
        self.paddle = CATCH_GRID / 2;
        self.drops = 0;
        self.spawn();
        Observation::Frame(self.draw())
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.clock.begin_step(&self.spec, action)?;
        self.paddle = match action {
            0 => self.paddle.saturating_sub(1).max(PADDLE_HALF),
            2 => (self.paddle + 1).min(CATCH_GRID - 1 - PADDLE_HALF),
            _ => self.paddle,
        };
        self.object.0 += 1;
        let mut reward = 0.0;
        if self.object.0 == PADDLE_ROW {
            reward = if self.object.1.abs_diff(self.paddle) <= PADDLE_HALF { 1.0 } else { -1.0 };
            self.drops += 1;
            self.spawn();
        }
        let done = self.clock.finish(&self.spec, self.drops >= CATCH_DROPS);
        Ok(StepResult {
            observation: Observation::Frame(self.draw()),
            reward,
            done,
            step: self.clock.steps,
        })
    }

    fn render_frame(&self) -> Result<RgbFrame> {
        Ok(self.draw())
    }
}
