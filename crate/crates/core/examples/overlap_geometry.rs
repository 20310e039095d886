//! Viewport transforms and exact rectangle / polygon overlap.

use histogym::annotations::{AnnotationSet, Polygon};
use histogym::env::select_levels;
use histogym::geometry::{
    check_overlap, reparent, viewport_to_base, AgentPos, BaseRect, Normalize, ZoomDirection,
};
use histogym::pyramid::PyramidGeometry;

fn main() -> histogym::Result<()> {
    let geom = PyramidGeometry::new(4096, 4096, 128)?;
    let levels = select_levels(&geom, 3)?;
    println!("levels {:?} of {}", levels, geom.level_count);

    let mut pos = AgentPos::new(0, 0, 0);
    for dir in [ZoomDirection::In, ZoomDirection::In, ZoomDirection::Out] {
        let rect = viewport_to_base(&geom, &levels, pos)?;
        println!("{pos:?} covers {:?}", rect.as_array());
        pos = reparent(&geom, &levels, pos, dir)?;
    }
    println!("{pos:?} covers {:?}", viewport_to_base(&geom, &levels, pos)?.as_array());

    let triangle = Polygon::new(vec![(0.0, 0.0), (1024.0, 0.0), (0.0, 1024.0)], "triangle", None)?;
    let bowtie = Polygon::new(
        vec![(2048.0, 2048.0), (3072.0, 3072.0), (3072.0, 2048.0), (2048.0, 2560.0)],
        "bowtie",
        None,
    )?;
    println!("bowtie self-intersecting: {}", bowtie.is_self_intersecting());
    let set = AnnotationSet::new(vec![triangle, bowtie], "demo");

    let views = [
        BaseRect::new(0.0, 0.0, 512.0, 512.0),
        BaseRect::new(256.0, 256.0, 768.0, 768.0),
        BaseRect::new(2048.0, 2048.0, 3072.0, 3072.0),
        BaseRect::new(3500.0, 0.0, 4000.0, 500.0),
    ];
    for view in views {
        let v = check_overlap(&view, &set, Normalize::Viewport);
        let p = check_overlap(&view, &set, Normalize::Polygon);
        println!(
            "{:?}: polygon {:?}, viewport ratio {:.4}, polygon ratio {:.4}",
            view.as_array(),
            v.overlap_seg_index,
            v.overlap_ratio,
            p.overlap_ratio
        );
    }
    Ok(())
}
