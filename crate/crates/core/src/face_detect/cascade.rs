//! Boosted Haar cascade model and its XML interchange format.
//!
//! Two schemas are accepted: the current flat encoding
//! (`<cascade type_id="opencv-cascade-classifier">` with a shared feature
//! table and `internalNodes` / `leafValues` arrays) and the older tree
//! encoding (`type_id="opencv-haar-classifier"` with features inlined in
//! every tree node).

use std::fmt::Write as _;

use roxmltree::{Document, Node};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CascadeError {
    #[error("malformed cascade XML at line {line}, column {column}: {message}")]
    Xml {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("invalid cascade at line {line}: {message}")]
    Schema { line: u32, message: String },
    #[error("unsupported cascade content at line {line}: {message}")]
    Unsupported { line: u32, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaarFeature {
    pub rects: Vec<WeightedRect>,
    pub tilted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Node(usize),
    Leaf(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitNode {
    pub feature: usize,
    pub threshold: f64,
    pub left: Branch,
    pub right: Branch,
}

/// A decision tree (a stump in most stock cascades). Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakClassifier {
    pub nodes: Vec<SplitNode>,
    pub leaves: Vec<f64>,
}

impl WeakClassifier {
    /// Walks the tree given a feature-value oracle and returns the leaf value.
    #[inline]
    pub fn eval(&self, mut feature_value: impl FnMut(usize) -> f64) -> f64 {
        let mut idx = 0;
        loop {
            let node = &self.nodes[idx];
            let next = if feature_value(node.feature) < node.threshold {
                node.left
            } else {
                node.right
            };
            match next {
                Branch::Node(n) => idx = n,
                Branch::Leaf(l) => return self.leaves[l],
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub threshold: f64,
    pub classifiers: Vec<WeakClassifier>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cascade {
    pub window_width: u32,
    pub window_height: u32,
    pub stages: Vec<Stage>,
    pub features: Vec<HaarFeature>,
}

const DEFAULT_FRONTAL: &str = include_str!("../../data/haarcascade_frontalface_default.xml");

impl Cascade {
    /// The stock 24×24 frontal-face cascade bundled with the crate.
    pub fn frontal_default() -> Cascade {
        parse_cascade(DEFAULT_FRONTAL.as_bytes()).expect("bundled cascade is valid")
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn weak_count(&self) -> usize {
        self.stages.iter().map(|s| s.classifiers.len()).sum()
    }

    /// Serializes to the flat schema. Numbers use shortest round-trip
    /// formatting, so `parse_cascade(c.to_xml())` reproduces `c` exactly.
    pub fn to_xml(&self) -> String {
        let mut s = String::new();
        s.push_str("<?xml version=\"1.0\"?>\n<opencv_storage>\n");
        s.push_str("<cascade type_id=\"opencv-cascade-classifier\">\n");
        s.push_str("  <stageType>BOOST</stageType>\n  <featureType>HAAR</featureType>\n");
        let _ = writeln!(s, "  <height>{}</height>", self.window_height);
        let _ = writeln!(s, "  <width>{}</width>", self.window_width);
        let _ = writeln!(s, "  <stageNum>{}</stageNum>", self.stages.len());
        s.push_str("  <stages>\n");
        for stage in &self.stages {
            s.push_str("    <_>\n");
            let _ = writeln!(s, "      <maxWeakCount>{}</maxWeakCount>", stage.classifiers.len());
            let _ = writeln!(s, "      <stageThreshold>{:?}</stageThreshold>", stage.threshold);
            s.push_str("      <weakClassifiers>\n");
            for wc in &stage.classifiers {
                s.push_str("        <_>\n          <internalNodes>");
                for node in &wc.nodes {
                    let _ = write!(
                        s,
                        " {} {} {} {:?}",
                        encode_branch(node.left),
                        encode_branch(node.right),
                        node.feature,
                        node.threshold
                    );
                }
                s.push_str("</internalNodes>\n          <leafValues>");
                for leaf in &wc.leaves {
                    let _ = write!(s, " {leaf:?}");
                }
                s.push_str("</leafValues>\n        </_>\n");
            }
            s.push_str("      </weakClassifiers>\n    </_>\n");
        }
        s.push_str("  </stages>\n  <features>\n");
        for f in &self.features {
            s.push_str("    <_>\n      <rects>\n");
            for r in &f.rects {
                let _ = writeln!(s, "        <_>{} {} {} {} {:?}</_>", r.x, r.y, r.w, r.h, r.weight);
            }
            s.push_str("      </rects>\n");
            if f.tilted {
                s.push_str("      <tilted>1</tilted>\n");
            }
            s.push_str("    </_>\n");
        }
        s.push_str("  </features>\n</cascade>\n</opencv_storage>\n");
        s
    }
}

fn encode_branch(b: Branch) -> i64 {
    match b {
        Branch::Node(n) => n as i64,
        Branch::Leaf(l) => -(l as i64),
    }
}

fn decode_branch(v: i64) -> Branch {
    if v > 0 {
        Branch::Node(v as usize)
    } else {
        Branch::Leaf(v.unsigned_abs() as usize)
    }
}

/// Parses a Haar cascade in either XML schema.
pub fn parse_cascade(bytes: &[u8]) -> Result<Cascade, CascadeError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CascadeError::Xml {
        line: line_of_offset(bytes, e.valid_up_to()),
        column: 0,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let doc = Document::parse(text).map_err(|e| {
        let pos = e.pos();
        CascadeError::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let p = Parser { doc: &doc };
    let root = doc.root_element();
    if root.tag_name().name() != "opencv_storage" {
        return Err(p.schema(root, "root element must be <opencv_storage>"));
    }
    let body = elements(root)
        .next()
        .ok_or_else(|| p.schema(root, "no cascade element inside <opencv_storage>"))?;
    if child(body, "features").is_some() && child(body, "stages").is_some() {
        p.parse_flat(body)
    } else if child(body, "size").is_some() && child(body, "stages").is_some() {
        p.parse_tree(body)
    } else {
        Err(p.schema(body, "neither the flat nor the tree cascade schema was recognised"))
    }
}

fn line_of_offset(bytes: &[u8], offset: usize) -> u32 {
    1 + bytes[..offset].iter().filter(|&&b| b == b'\n').count() as u32
}

fn elements<'a, 'i>(n: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    n.children().filter(|c| c.is_element())
}

fn child<'a, 'i>(n: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    elements(n).find(|c| c.tag_name().name() == name)
}

struct Parser<'d, 'i> {
    doc: &'d Document<'i>,
}

impl<'d, 'i> Parser<'d, 'i> {
    fn line(&self, n: Node) -> u32 {
        self.doc.text_pos_at(n.range().start).row
    }

    fn schema(&self, n: Node, message: impl Into<String>) -> CascadeError {
        CascadeError::Schema {
            line: self.line(n),
            message: message.into(),
        }
    }

    fn unsupported(&self, n: Node, message: impl Into<String>) -> CascadeError {
        CascadeError::Unsupported {
            line: self.line(n),
            message: message.into(),
        }
    }

    fn req<'a>(&self, n: Node<'a, 'i>, name: &str) -> Result<Node<'a, 'i>, CascadeError> {
        child(n, name).ok_or_else(|| self.schema(n, format!("missing <{name}>")))
    }

    fn text<'a>(&self, n: Node<'a, 'i>) -> &'a str {
        // Text split across comments is rare; joining is not needed for stock files.
        n.text().unwrap_or("").trim()
    }

    fn number<T: std::str::FromStr>(&self, n: Node, token: &str) -> Result<T, CascadeError> {
        token
            .parse::<T>()
            .map_err(|_| self.schema(n, format!("cannot parse number {token:?}")))
    }

    fn numbers<T: std::str::FromStr>(&self, n: Node) -> Result<Vec<T>, CascadeError> {
        let mut out = Vec::new();
        for c in n.children().filter(|c| c.is_text()) {
            for tok in c.text().unwrap_or("").split_whitespace() {
                out.push(self.number(n, tok)?);
            }
        }
        Ok(out)
    }

    fn scalar<T: std::str::FromStr>(&self, n: Node, name: &str) -> Result<T, CascadeError> {
        let c = self.req(n, name)?;
        self.number(c, self.text(c))
    }

    fn parse_rects(&self, feature: Node, win: (u32, u32)) -> Result<HaarFeature, CascadeError> {
        let rects_node = self.req(feature, "rects")?;
        let mut rects = Vec::new();
        for r in elements(rects_node) {
            let vals: Vec<f64> = self.numbers(r)?;
            if vals.len() != 5 {
                return Err(self.schema(r, format!("rect needs 5 numbers, found {}", vals.len())));
            }
            let int = |v: f64| -> Result<u32, CascadeError> {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as u32)
                } else {
                    Err(self.schema(r, format!("rect coordinate {v} is not a non-negative integer")))
                }
            };
            let rect = WeightedRect {
                x: int(vals[0])?,
                y: int(vals[1])?,
                w: int(vals[2])?,
                h: int(vals[3])?,
                weight: vals[4],
            };
            if rect.x + rect.w > win.0 || rect.y + rect.h > win.1 {
                return Err(self.schema(r, "rect extends outside the detection window"));
            }
            rects.push(rect);
        }
        if !(2..=3).contains(&rects.len()) {
            return Err(self.schema(
                rects_node,
                format!("Haar feature needs 2 or 3 rects, found {}", rects.len()),
            ));
        }
        let tilted = match child(feature, "tilted") {
            Some(t) => self.number::<i64>(t, self.text(t))? != 0,
            None => false,
        };
        if tilted {
            return Err(self.unsupported(feature, "tilted (45°) Haar features are not supported"));
        }
        Ok(HaarFeature { rects, tilted })
    }

    fn parse_flat(&self, body: Node) -> Result<Cascade, CascadeError> {
        if let Some(st) = child(body, "stageType") {
            if self.text(st) != "BOOST" {
                return Err(self.unsupported(st, format!("stage type {:?}", self.text(st))));
            }
        }
        if let Some(ft) = child(body, "featureType") {
            if self.text(ft) != "HAAR" {
                return Err(self.unsupported(ft, format!("feature type {:?}", self.text(ft))));
            }
        }
        let width: u32 = self.scalar(body, "width")?;
        let height: u32 = self.scalar(body, "height")?;
        if width < 3 || height < 3 {
            return Err(self.schema(body, "detection window must be at least 3x3"));
        }
        let stages_node = self.req(body, "stages")?;
        let mut stages = Vec::new();
        for sn in elements(stages_node) {
            let threshold: f64 = self.scalar(sn, "stageThreshold")?;
            let weak_node = self.req(sn, "weakClassifiers")?;
            let mut classifiers = Vec::new();
            for wn in elements(weak_node) {
                let inodes = self.req(wn, "internalNodes")?;
                let raw: Vec<f64> = self.numbers(inodes)?;
                if raw.is_empty() || raw.len() % 4 != 0 {
                    return Err(self.schema(
                        inodes,
                        "internalNodes must hold groups of (left, right, feature, threshold); \
                         categorical splits are not supported",
                    ));
                }
                let nodes = raw
                    .chunks_exact(4)
                    .map(|c| SplitNode {
                        left: decode_branch(c[0] as i64),
                        right: decode_branch(c[1] as i64),
                        feature: c[2] as usize,
                        threshold: c[3],
                    })
                    .collect();
                let leaves: Vec<f64> = self.numbers(self.req(wn, "leafValues")?)?;
                let wc = WeakClassifier { nodes, leaves };
                self.check_tree(wn, &wc)?;
                classifiers.push(wc);
            }
            if let Some(decl) = child(sn, "maxWeakCount") {
                let declared: usize = self.number(decl, self.text(decl))?;
                if declared != classifiers.len() {
                    return Err(self.schema(
                        decl,
                        format!("stage declares {declared} weak classifiers but holds {}", classifiers.len()),
                    ));
                }
            }
            if classifiers.is_empty() {
                return Err(self.schema(sn, "stage without weak classifiers"));
            }
            stages.push(Stage {
                threshold,
                classifiers,
            });
        }
        if let Some(decl) = child(body, "stageNum") {
            let declared: usize = self.number(decl, self.text(decl))?;
            if declared != stages.len() {
                return Err(self.schema(
                    decl,
                    format!("cascade declares {declared} stages but holds {}", stages.len()),
                ));
            }
        }
        let features_node = self.req(body, "features")?;
        let features = elements(features_node)
            .map(|f| self.parse_rects(f, (width, height)))
            .collect::<Result<Vec<_>, _>>()?;
        let cascade = Cascade {
            window_width: width,
            window_height: height,
            stages,
            features,
        };
        self.check_features(stages_node, &cascade)?;
        Ok(cascade)
    }

    fn parse_tree(&self, body: Node) -> Result<Cascade, CascadeError> {
        let size_node = self.req(body, "size")?;
        let size: Vec<u32> = self.numbers(size_node)?;
        let [width, height] = size[..] else {
            return Err(self.schema(size_node, "<size> must hold two integers"));
        };
        if width < 3 || height < 3 {
            return Err(self.schema(size_node, "detection window must be at least 3x3"));
        }
        let mut features = Vec::new();
        let mut stages = Vec::new();
        for (si, sn) in elements(self.req(body, "stages")?).enumerate() {
            if let Some(parent) = child(sn, "parent") {
                let parent: i64 = self.number(parent, self.text(parent))?;
                if parent != -1 && parent != si as i64 - 1 {
                    return Err(self.unsupported(sn, "tree-structured stage ordering"));
                }
            }
            let mut classifiers = Vec::new();
            for tree in elements(self.req(sn, "trees")?) {
                let mut nodes = Vec::new();
                let mut leaves = Vec::new();
                for nn in elements(tree) {
                    let feature = self.parse_rects(self.req(nn, "feature")?, (width, height))?;
                    features.push(feature);
                    let threshold: f64 = self.scalar(nn, "threshold")?;
                    let mut branch = |val: &str, node: &str| -> Result<Branch, CascadeError> {
                        if let Some(v) = child(nn, val) {
                            leaves.push(self.number(v, self.text(v))?);
                            Ok(Branch::Leaf(leaves.len() - 1))
                        } else if let Some(n) = child(nn, node) {
                            let idx: usize = self.number(n, self.text(n))?;
                            if idx == 0 {
                                return Err(self.schema(n, "tree node cannot point back to the root"));
                            }
                            Ok(Branch::Node(idx))
                        } else {
                            Err(self.schema(nn, format!("node needs <{val}> or <{node}>")))
                        }
                    };
                    let left = branch("left_val", "left_node")?;
                    let right = branch("right_val", "right_node")?;
                    nodes.push(SplitNode {
                        feature: features.len() - 1,
                        threshold,
                        left,
                        right,
                    });
                }
                let wc = WeakClassifier { nodes, leaves };
                self.check_tree(tree, &wc)?;
                classifiers.push(wc);
            }
            if classifiers.is_empty() {
                return Err(self.schema(sn, "stage without trees"));
            }
            stages.push(Stage {
                threshold: self.scalar(sn, "stage_threshold")?,
                classifiers,
            });
        }
        if stages.is_empty() {
            return Err(self.schema(body, "cascade has no stages"));
        }
        Ok(Cascade {
            window_width: width,
            window_height: height,
            stages,
            features,
        })
    }

    fn check_tree(&self, at: Node, wc: &WeakClassifier) -> Result<(), CascadeError> {
        if wc.nodes.is_empty() {
            return Err(self.schema(at, "weak classifier without split nodes"));
        }
        for node in &wc.nodes {
            for b in [node.left, node.right] {
                let ok = match b {
                    Branch::Node(n) => n < wc.nodes.len(),
                    Branch::Leaf(l) => l < wc.leaves.len(),
                };
                if !ok {
                    return Err(self.schema(at, format!("tree reference {b:?} out of range")));
                }
            }
        }
        // Children must have larger indices than their parent, so every walk ends.
        for (i, node) in wc.nodes.iter().enumerate() {
            for b in [node.left, node.right] {
                if let Branch::Node(n) = b {
                    if n <= i {
                        return Err(self.schema(at, "tree node references are not acyclic"));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_features(&self, at: Node, c: &Cascade) -> Result<(), CascadeError> {
        if c.stages.is_empty() {
            return Err(self.schema(at, "cascade has no stages"));
        }
        let n = c.features.len();
        for stage in &c.stages {
            for wc in &stage.classifiers {
                if let Some(bad) = wc.nodes.iter().find(|node| node.feature >= n) {
                    return Err(self.schema(
                        at,
                        format!("feature index {} out of range ({n} features)", bad.feature),
                    ));
                }
            }
        }
        Ok(())
    }
}
