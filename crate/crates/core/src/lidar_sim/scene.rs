use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{Transform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Axis-aligned box.
    Cuboid { min: Vec3, max: Vec3 },
    /// Infinite horizontal plane at height `z`.
    Plane { z: f64 },
}

impl Shape {
    pub fn contains(&self, p: &Vec3) -> bool {
        match *self {
            Shape::Sphere { center, radius } => (p - center).norm_squared() <= radius * radius,
            Shape::Cuboid { min, max } => (0..3).all(|i| p[i] >= min[i] && p[i] <= max[i]),
            Shape::Plane { z } => p.z <= z,
        }
    }

    /// Nearest positive ray parameter along a unit direction, if any.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        const EPS: f64 = 1e-12;
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let near = -b - s;
                let far = -b + s;
                if near > EPS {
                    Some(near)
                } else if far > EPS {
                    Some(far)
                } else {
                    None
                }
            }
            Shape::Cuboid { min, max } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for i in 0..3 {
                    if dir[i].abs() < 1e-15 {
                        if origin[i] < min[i] || origin[i] > max[i] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / dir[i];
                    let (mut a, mut b) = ((min[i] - origin[i]) * inv, (max[i] - origin[i]) * inv);
                    if a > b {
                        std::mem::swap(&mut a, &mut b);
                    }
                    t0 = t0.max(a);
                    t1 = t1.min(b);
                    if t0 > t1 {
                        return None;
                    }
                }
                if t0 > EPS {
                    Some(t0)
                } else if t1 > EPS {
                    Some(t1)
                } else {
                    None
                }
            }
            Shape::Plane { z } => {
                if dir.z.abs() < 1e-15 {
                    return None;
                }
                let t = (z - origin.z) / dir.z;
                (t > EPS).then_some(t)
            }
        }
    }

    pub fn center(&self) -> Vec3 {
        match *self {
            Shape::Sphere { center, .. } => center,
            Shape::Cuboid { min, max } => 0.5 * (min + max),
            Shape::Plane { z } => Vec3::new(0.0, 0.0, z),
        }
    }

    /// Rigidly moves the shape. Only rotations about the vertical axis by
    /// multiples of 90 degrees keep boxes axis-aligned, so boxes and planes are
    /// translated only.
    pub fn translated(&self, offset: &Vec3) -> Shape {
        match *self {
            Shape::Sphere { center, radius } => Shape::Sphere {
                center: center + offset,
                radius,
            },
            Shape::Cuboid { min, max } => Shape::Cuboid {
                min: min + offset,
                max: max + offset,
            },
            Shape::Plane { z } => Shape::Plane { z: z + offset.z },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub object_id: u32,
    pub is_obstacle: bool,
    pub is_target: bool,
}

impl Primitive {
    pub fn new(shape: Shape, object_id: u32) -> Self {
        Self {
            shape,
            object_id,
            is_obstacle: false,
            is_target: false,
        }
    }

    pub fn obstacle(mut self) -> Self {
        self.is_obstacle = true;
        self
    }

    pub fn target(mut self) -> Self {
        self.is_target = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub object_id: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    primitives: Vec<Primitive>,
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        for (i, p) in primitives.iter().enumerate() {
            match p.shape {
                Shape::Sphere { radius, center } => {
                    if !(radius > 0.0) || !radius.is_finite() || !center.iter().all(|v| v.is_finite()) {
                        return Err(Error::InvalidInput(format!("sphere {} has invalid geometry", p.object_id)));
                    }
                }
                Shape::Cuboid { min, max } => {
                    if !(0..3).all(|k| max[k] > min[k] && min[k].is_finite() && max[k].is_finite()) {
                        return Err(Error::InvalidInput(format!("box {} has non-positive extent", p.object_id)));
                    }
                }
                Shape::Plane { z } => {
                    if !z.is_finite() {
                        return Err(Error::InvalidInput(format!("plane {} is not finite", p.object_id)));
                    }
                }
            }
            if primitives[..i].iter().any(|q| q.object_id == p.object_id) {
                return Err(Error::InvalidInput(format!("duplicate object id {}", p.object_id)));
            }
        }
        Ok(Self { primitives })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    pub fn get(&self, object_id: u32) -> Option<&Primitive> {
        self.primitives.iter().find(|p| p.object_id == object_id)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Primitive> {
        self.primitives.iter().filter(|p| p.is_target)
    }

    pub fn obstacles(&self) -> impl Iterator<Item = &Primitive> {
        self.primitives.iter().filter(|p| p.is_obstacle)
    }

    pub fn raycast(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for p in &self.primitives {
            if let Some(t) = p.shape.intersect(origin, dir) {
                if t <= max_range && best.is_none_or(|b| t < b.distance) {
                    best = Some(Hit {
                        distance: t,
                        object_id: p.object_id,
                    });
                }
            }
        }
        best
    }

    /// Parses the line-oriented scene format:
    /// `sphere cx cy cz r id flags`, `box x0 y0 z0 x1 y1 z1 id flags`,
    /// `plane z id flags`, with `#` comments. Flags are a comma-separated
    /// subset of `obstacle,target` and may be omitted.
    pub fn parse(text: &str) -> Result<Self> {
        let mut prims = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let tok: Vec<&str> = body.split_whitespace().collect();
            let err = |message: String| Error::Parse { line, message };
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("`{s}` is not a number")));
            let (shape, rest) = match tok[0] {
                "sphere" if tok.len() >= 6 => (
                    Shape::Sphere {
                        center: Vec3::new(num(tok[1])?, num(tok[2])?, num(tok[3])?),
                        radius: num(tok[4])?,
                    },
                    &tok[5..],
                ),
                "box" if tok.len() >= 8 => (
                    Shape::Cuboid {
                        min: Vec3::new(num(tok[1])?, num(tok[2])?, num(tok[3])?),
                        max: Vec3::new(num(tok[4])?, num(tok[5])?, num(tok[6])?),
                    },
                    &tok[7..],
                ),
                "plane" if tok.len() >= 3 => (Shape::Plane { z: num(tok[1])? }, &tok[2..]),
                kind @ ("sphere" | "box" | "plane") => {
                    return Err(err(format!("too few fields for `{kind}`")));
                }
                other => return Err(err(format!("unknown primitive `{other}`"))),
            };
            if rest.len() > 2 {
                return Err(err("trailing fields".into()));
            }
            let id = rest[0]
                .parse::<u32>()
                .map_err(|_| err(format!("`{}` is not an object id", rest[0])))?;
            let mut prim = Primitive::new(shape, id);
            if let Some(flags) = rest.get(1) {
                for f in flags.split(',').filter(|f| !f.is_empty()) {
                    match f {
                        "obstacle" => prim.is_obstacle = true,
                        "target" => prim.is_target = true,
                        "none" | "-" => {}
                        other => return Err(err(format!("unknown flag `{other}`"))),
                    }
                }
            }
            prims.push(prim);
        }
        Scene::new(prims).map_err(|e| match e {
            Error::InvalidInput(m) => Error::Parse { line: 0, message: m },
            e => e,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.primitives {
            match p.shape {
                Shape::Sphere { center: c, radius } => {
                    let _ = write!(out, "sphere {} {} {} {} {}", c.x, c.y, c.z, radius, p.object_id);
                }
                Shape::Cuboid { min, max } => {
                    let _ = write!(
                        out,
                        "box {} {} {} {} {} {} {}",
                        min.x, min.y, min.z, max.x, max.y, max.z, p.object_id
                    );
                }
                Shape::Plane { z } => {
                    let _ = write!(out, "plane {} {}", z, p.object_id);
                }
            }
            let flags: Vec<&str> = [(p.is_obstacle, "obstacle"), (p.is_target, "target")]
                .iter()
                .filter_map(|&(on, name)| on.then_some(name))
                .collect();
            if !flags.is_empty() {
                out.push(' ');
                out.push_str(&flags.join(","));
            }
            out.push('\n');
        }
        out
    }

    /// Scene translated by `pose.translation`; used for rigid-motion checks on
    /// sphere-only scenes when combined with [`Scene::transformed_spheres`].
    pub fn translated(&self, offset: &Vec3) -> Scene {
        Scene {
            primitives: self
                .primitives
                .iter()
                .map(|p| Primitive {
                    shape: p.shape.translated(offset),
                    ..*p
                })
                .collect(),
        }
    }

    /// Applies an arbitrary rigid motion; valid only for sphere-only scenes.
    pub fn transformed_spheres(&self, pose: &Transform) -> Result<Scene> {
        let primitives = self
            .primitives
            .iter()
            .map(|p| match p.shape {
                Shape::Sphere { center, radius } => Ok(Primitive {
                    shape: Shape::Sphere {
                        center: pose.apply(&center),
                        radius,
                    },
                    ..*p
                }),
                _ => Err(Error::InvalidInput("only spheres support arbitrary rigid motion".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene { primitives })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raycast_examples() {
        let s = Scene::new(vec![Primitive::new(
            Shape::Sphere {
                center: Vec3::zeros(),
                radius: 1.0,
            },
            1,
        )])
        .unwrap();
        let hit = s.raycast(&Vec3::new(-2.0, 0.0, 0.0), &Vec3::x(), 10.0).unwrap();
        assert!((hit.distance - 1.0).abs() < 1e-12);
        assert_eq!(hit.object_id, 1);
        assert!(s.raycast(&Vec3::new(-2.0, 0.0, 0.0), &-Vec3::x(), 10.0).is_none());
        // Beyond max range.
        assert!(s.raycast(&Vec3::new(-2.0, 0.0, 0.0), &Vec3::x(), 0.5).is_none());

        let b = Scene::new(vec![Primitive::new(
            Shape::Cuboid {
                min: Vec3::zeros(),
                max: Vec3::new(1.0, 1.0, 1.0),
            },
            2,
        )])
        .unwrap();
        let hit = b.raycast(&Vec3::new(-1.0, 0.5, 0.5), &Vec3::x(), 10.0).unwrap();
        assert!((hit.distance - 1.0).abs() < 1e-12);
        // From inside, the exit face is the nearest positive hit.
        let hit = b.raycast(&Vec3::new(0.25, 0.5, 0.5), &Vec3::x(), 10.0).unwrap();
        assert!((hit.distance - 0.75).abs() < 1e-12);

        let p = Scene::new(vec![Primitive::new(Shape::Plane { z: 0.0 }, 3)]).unwrap();
        let d = Vec3::new(1.0, 0.0, -1.0).normalize();
        let hit = p.raycast(&Vec3::new(0.0, 0.0, 1.0), &d, 10.0).unwrap();
        assert!((hit.distance - 2f64.sqrt()).abs() < 1e-12);
        assert!(p.raycast(&Vec3::new(0.0, 0.0, 1.0), &Vec3::z(), 10.0).is_none());
    }

    #[test]
    fn nearest_of_several() {
        let s = Scene::new(vec![
            Primitive::new(Shape::Sphere { center: Vec3::new(5.0, 0.0, 0.0), radius: 1.0 }, 1),
            Primitive::new(Shape::Sphere { center: Vec3::new(2.0, 0.0, 0.0), radius: 0.5 }, 2),
        ])
        .unwrap();
        let hit = s.raycast(&Vec3::zeros(), &Vec3::x(), 100.0).unwrap();
        assert_eq!(hit.object_id, 2);
        assert!((hit.distance - 1.5).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let bad = Scene::new(vec![Primitive::new(Shape::Sphere { center: Vec3::zeros(), radius: 0.0 }, 1)]);
        assert!(bad.is_err());
        let bad = Scene::new(vec![Primitive::new(
            Shape::Cuboid { min: Vec3::zeros(), max: Vec3::new(1.0, 0.0, 1.0) },
            1,
        )]);
        assert!(bad.is_err());
        let dup = Scene::new(vec![
            Primitive::new(Shape::Plane { z: 0.0 }, 1),
            Primitive::new(Shape::Plane { z: 1.0 }, 1),
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn parse_and_render() {
        let text = "# desk\nsphere 0.4 0 1.3 0.04 7 target\nbox 0 0 0 1 1 1 3 obstacle\nplane 0 1\nsphere 1 1 1 0.1 9 obstacle,target # both\n";
        let s = Scene::parse(text).unwrap();
        assert_eq!(s.primitives().len(), 4);
        assert!(s.get(7).unwrap().is_target);
        assert!(s.get(3).unwrap().is_obstacle);
        assert!(!s.get(1).unwrap().is_obstacle);
        let again = Scene::parse(&s.render()).unwrap();
        assert_eq!(again, s);

        for bad in ["cone 1 2 3", "sphere 1 2 3", "sphere a 0 0 1 1", "plane 0 1 shiny", "box 0 0 0 1 1 1 x"] {
            assert!(matches!(Scene::parse(bad), Err(Error::Parse { line: 1, .. })), "{bad}");
        }
        assert!(Scene::parse("sphere 0 0 0 -1 1").is_err());
    }
}
