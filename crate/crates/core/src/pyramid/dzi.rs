use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};

use super::{PyramidGeometry, RgbTile, TileAddress, VirtualSlide, WHITE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileFormat {
    Png,
    Jpeg,
}

impl TileFormat {
    fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "png" => Ok(TileFormat::Png),
            "jpg" | "jpeg" => Ok(TileFormat::Jpeg),
            other => Err(Error::format(format!("unsupported tile format '{other}'"))),
        }
    }

    fn image_format(self) -> ImageFormat {
        match self {
            TileFormat::Png => ImageFormat::Png,
            TileFormat::Jpeg => ImageFormat::Jpeg,
        }
    }
}

/// Parsed fields of a `.dzi` descriptor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DziDescriptor {
    pub tile_size: u32,
    pub overlap: u32,
    pub format: String,
    pub width: u32,
    pub height: u32,
}

impl DziDescriptor {
    pub fn parse(text: &str) -> Result<Self> {
        let doc = roxmltree::Document::parse(text).map_err(|e| Error::Format {
            message: format!("descriptor XML: {e}"),
            line: Some(e.pos().row),
        })?;
        let image = doc.root_element();
        if image.tag_name().name() != "Image" {
            return Err(Error::format("descriptor root element must be <Image>"));
        }
        let attr = |node: roxmltree::Node, name: &str| -> Result<u32> {
            let raw = node
                .attribute(name)
                .ok_or_else(|| Error::format(format!("missing attribute {name}")))?;
            raw.trim()
                .parse()
                .map_err(|_| Error::format(format!("attribute {name}='{raw}' is not an integer")))
        };
        let size = image
            .children()
            .find(|n| n.is_element() && n.tag_name().name() == "Size")
            .ok_or_else(|| Error::format("descriptor lacks <Size>"))?;
        let overlap = match image.attribute("Overlap") {
            Some(_) => attr(image, "Overlap")?,
            None => 0,
        };
        if overlap != 0 {
            return Err(Error::format(format!("tile overlap {overlap} is not supported")));
        }
        let desc = DziDescriptor {
            tile_size: attr(image, "TileSize")?,
            overlap,
            format: image
                .attribute("Format")
                .ok_or_else(|| Error::format("missing attribute Format"))?
                .to_string(),
            width: attr(size, "Width")?,
            height: attr(size, "Height")?,
        };
        TileFormat::parse(&desc.format)?;
        if desc.tile_size == 0 || desc.width == 0 || desc.height == 0 {
            return Err(Error::format("descriptor dimensions must be positive"));
        }
        Ok(desc)
    }

    pub fn to_xml(&self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <Image xmlns=\"http://schemas.microsoft.com/deepzoom/2008\" Format=\"{}\" Overlap=\"{}\" TileSize=\"{}\">\n  \
             <Size Height=\"{}\" Width=\"{}\"/>\n\
             </Image>\n",
            self.format, self.overlap, self.tile_size, self.height, self.width
        )
    }
}

/// Tiles read from `<name>_files/<level>/<col>_<row>.<ext>` next to the descriptor.
#[derive(Debug)]
pub struct DziSource {
    descriptor: DziDescriptor,
    format: TileFormat,
    tiles_dir: PathBuf,
}

impl DziSource {
    pub fn open(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::format(format!("descriptor {} not found", path.display()))
            }
            _ => Error::io_at(path, e),
        })?;
        let descriptor = DziDescriptor::parse(&text)?;
        let format = TileFormat::parse(&descriptor.format)?;
        let tiles_dir = tiles_dir_for(path);
        if !tiles_dir.is_dir() {
            return Err(Error::format(format!(
                "tile directory {} does not exist",
                tiles_dir.display()
            )));
        }
        Ok(Self {
            descriptor,
            format,
            tiles_dir,
        })
    }

    pub fn descriptor(&self) -> &DziDescriptor {
        &self.descriptor
    }

    pub fn geometry(&self) -> PyramidGeometry {
        PyramidGeometry::new(
            self.descriptor.width,
            self.descriptor.height,
            self.descriptor.tile_size,
        )
        .expect("descriptor validated")
    }

    pub fn tile_path(&self, addr: TileAddress) -> PathBuf {
        self.tiles_dir
            .join(addr.level.to_string())
            .join(format!("{}_{}.{}", addr.col, addr.row, self.descriptor.format))
    }

    pub(crate) fn load_tile(&self, g: &PyramidGeometry, addr: TileAddress) -> Result<RgbTile> {
        let path = self.tile_path(addr);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::TileMissing(addr))
            }
            Err(e) => return Err(Error::io_at(path, e)),
        };
        let img = image::load_from_memory_with_format(&bytes, self.format.image_format())?.to_rgb8();
        let t = g.tile_size;
        let (ew, eh) = g.tile_extent(addr);
        if img.width() > t || img.height() > t {
            return Err(Error::format(format!(
                "tile {addr} is {}x{}, larger than tile size {t}",
                img.width(),
                img.height()
            )));
        }
        let mut data = vec![WHITE; (t * t * 3) as usize];
        let w = img.width().min(ew);
        for y in 0..img.height().min(eh) {
            let src = (y * img.width() * 3) as usize;
            let dst = (y * t * 3) as usize;
            data[dst..dst + (w * 3) as usize]
                .copy_from_slice(&img.as_raw()[src..src + (w * 3) as usize]);
        }
        Ok(RgbTile::from_bytes(t, data))
    }
}

fn tiles_dir_for(descriptor: &Path) -> PathBuf {
    let stem = descriptor
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    descriptor.with_file_name(format!("{stem}_files"))
}

/// Write every level of `slide` as a PNG DeepZoom pyramid at `descriptor_path`.
/// Edge tiles are stored cropped to their image content.
pub fn write_dzi(slide: &VirtualSlide, descriptor_path: impl AsRef<Path>) -> Result<()> {
    let path = descriptor_path.as_ref();
    let g = *slide.geometry();
    let desc = DziDescriptor {
        tile_size: g.tile_size,
        overlap: 0,
        format: "png".into(),
        width: g.base_width,
        height: g.base_height,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io_at(parent, e))?;
    }
    fs::write(path, desc.to_xml()).map_err(|e| Error::io_at(path, e))?;
    let tiles_dir = tiles_dir_for(path);
    // finest first so pooled levels find their children already cached
    for level in (0..g.level_count).rev() {
        let dir = tiles_dir.join(level.to_string());
        fs::create_dir_all(&dir).map_err(|e| Error::io_at(&dir, e))?;
        let (cols, rows) = g.level_tiles(level);
        for row in 0..rows {
            for col in 0..cols {
                let addr = TileAddress::new(level, col, row);
                let tile = slide.read_tile(addr)?;
                let (ew, eh) = g.tile_extent(addr);
                let mut img = RgbImage::new(ew, eh);
                for y in 0..eh {
                    for x in 0..ew {
                        img.put_pixel(x, y, image::Rgb(tile.pixel(x, y)));
                    }
                }
                let out = dir.join(format!("{col}_{row}.png"));
                img.save_with_format(&out, ImageFormat::Png)?;
            }
        }
    }
    Ok(())
}
