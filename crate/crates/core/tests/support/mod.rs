pub mod grid_filter;
